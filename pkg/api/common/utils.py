"""
Common utility functions shared across the application.
"""

import json
import re
from typing import Any

SIZE_UNITS = {
    "": 1,
    "B": 1,
    "KIB": 1024,
    "MIB": 1024 ** 2,
    "GIB": 1024 ** 3,
    "KB": 1000,
    "MB": 1000 ** 2,
    "GB": 1000 ** 3,
}

_SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*([A-Za-z]*)\s*$")


def ceil_div(numerator: int, denominator: int) -> int:
    """Integer division rounding towards positive infinity."""
    return -(-numerator // denominator)


def parse_size(value: Any) -> Any:
    """
    Parse a byte size such as ``"16KiB"`` into an integer.

    Args:
        value: An int, or a string made of digits and an optional unit

    Returns:
        The size in bytes, or the value unchanged when it is not a size string
        (pydantic then reports the type error)
    """
    if not isinstance(value, str):
        return value
    match = _SIZE_PATTERN.match(value)
    if not match:
        return value
    number, unit = match.groups()
    multiplier = SIZE_UNITS.get(unit.upper())
    if multiplier is None:
        return value
    return int(number) * multiplier


def parse_scalar(text: str) -> Any:
    """
    Parse a command-line override value.

    Tries int, float, bool and comma-separated list in that order and falls back
    to the raw string. Integral floats such as ``1e3`` become ints.
    """
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        number = float(text)
    except ValueError:
        pass
    else:
        if number.is_integer():
            return int(number)
        return number
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if "," in text:
        return [parse_scalar(part) for part in text.split(",") if part.strip()]
    return text


def dumps_line(record: dict[str, Any]) -> str:
    """Serialize one JSONL record deterministically."""
    return json.dumps(record, separators=(",", ":"), ensure_ascii=True)
