"""
Validation of device geometry and strategy configuration, plus the derived
layout quantities (elements per zone, lane width, group size) that the flash,
allocator and zone modules share.
"""

from __future__ import annotations

import logging
from typing import Any, Mapping

from pydantic import ValidationError

from api.common.errors import (
    CapacityViolation, ConfigError, DivisibilityViolation, InvalidChunkSize, MissingField,
)
from api.common.schemas import StrategyKind
from api.geometry.constants import DEVICE_KEY_ALIASES, PROFILES, REQUIRED_DEVICE_FIELDS
from api.geometry.schemas import DeviceGeometry, StrategyConfig

logger = logging.getLogger(__name__)


def _normalize_keys(raw: Mapping[str, Any]) -> dict[str, Any]:
    fields: dict[str, Any] = {}
    profile = raw.get("profile")
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"Unknown device profile '{profile}'", choices=sorted(PROFILES))
        fields.update(PROFILES[profile])
    for key, value in raw.items():
        if key == "profile":
            continue
        fields[DEVICE_KEY_ALIASES.get(key, key)] = value
    return fields


def validate_geometry(raw_config: Mapping[str, Any]) -> DeviceGeometry:
    """
    Validate a device configuration document and fill derived fields.

    Args:
        raw_config: The [device] section, optionally naming a base ``profile``

    Returns:
        DeviceGeometry: Validated geometry with L, E and blocks_per_lun set

    Raises:
        MissingField: If a required field is absent
        DivisibilityViolation: If L does not divide blocks_per_zone, or the
            physical LUN size is not a whole number of zone slices
        CapacityViolation: If the logical zones need more blocks than exist
        ConfigError: For any other invalid value
    """
    fields = _normalize_keys(raw_config)

    missing = [name for name in REQUIRED_DEVICE_FIELDS if fields.get(name) is None]
    if missing:
        raise MissingField(f"Missing device field(s): {', '.join(missing)}", fields=missing)

    channels = fields["channels"]
    luns_total = fields.get("luns_total")
    luns_per_channel = fields.get("luns_per_channel")
    if not isinstance(channels, int) or channels <= 0:
        raise ConfigError("channels must be a positive integer", channels=channels)

    if luns_per_channel is None:
        if luns_total is None:
            luns_per_channel = 1
        elif luns_total % channels:
            raise DivisibilityViolation(
                f"{luns_total} LUNs cannot be spread evenly over {channels} channels",
                luns_total=luns_total, channels=channels,
            )
        else:
            luns_per_channel = luns_total // channels
    if luns_total is None:
        luns_total = channels * luns_per_channel
    if luns_total != channels * luns_per_channel:
        raise ConfigError(
            "luns_total must equal channels x luns_per_channel",
            luns_total=luns_total, channels=channels, luns_per_channel=luns_per_channel,
        )
    fields["luns_per_channel"] = luns_per_channel
    fields["luns_total"] = luns_total

    blocks_per_zone = fields["blocks_per_zone"]
    if isinstance(blocks_per_zone, int) and blocks_per_zone > 0:
        if blocks_per_zone % luns_total:
            raise DivisibilityViolation(
                f"blocks_per_zone={blocks_per_zone} is not divisible by L={luns_total}",
                blocks_per_zone=blocks_per_zone, luns_total=luns_total,
            )
        e = blocks_per_zone // luns_total
        if fields.get("blocks_per_lun_per_zone", e) != e:
            raise ConfigError("blocks_per_lun_per_zone must equal blocks_per_zone / L", expected=e)
        fields["blocks_per_lun_per_zone"] = e

        zones_total = fields["zones_total"]
        if isinstance(zones_total, int) and zones_total > 0:
            blocks_per_lun = fields.get("blocks_per_lun")
            if blocks_per_lun is None:
                blocks_per_lun = zones_total * e
            if not isinstance(blocks_per_lun, int) or blocks_per_lun <= 0:
                raise ConfigError("blocks_per_lun must be a positive integer", blocks_per_lun=blocks_per_lun)
            if blocks_per_lun % e:
                raise DivisibilityViolation(
                    f"blocks_per_lun={blocks_per_lun} is not a multiple of E={e}",
                    blocks_per_lun=blocks_per_lun, blocks_per_lun_per_zone=e,
                )
            if zones_total * blocks_per_zone > luns_total * blocks_per_lun:
                raise CapacityViolation(
                    f"{zones_total} zones of {blocks_per_zone} blocks exceed "
                    f"{luns_total * blocks_per_lun} physical blocks",
                    zones_total=zones_total, blocks_per_zone=blocks_per_zone,
                )
            fields["blocks_per_lun"] = blocks_per_lun

            max_open = fields["max_open_zones"]
            if isinstance(max_open, int) and max_open > zones_total:
                raise ConfigError(
                    f"max_open_zones={max_open} exceeds zones_total={zones_total}",
                    max_open_zones=max_open, zones_total=zones_total,
                )

    try:
        geometry = DeviceGeometry(**fields)
    except ValidationError as e:
        raise ConfigError(f"Invalid device configuration: {e}") from e

    logger.debug("Validated geometry L=%d E=%d P=%d zones=%d",
                 geometry.luns_total, geometry.blocks_per_lun_per_zone,
                 geometry.pages_per_block, geometry.zones_total)
    return geometry


def validate_strategy(cfg: StrategyConfig | Mapping[str, Any] | str, geom: DeviceGeometry) -> StrategyConfig:
    """
    Check a strategy against a validated geometry.

    Args:
        cfg: A StrategyConfig, a [strategy] section, or a label such as ``chunk-11``
        geom: Validated device geometry

    Returns:
        StrategyConfig: The accepted strategy (chunk size cleared for non-chunk kinds)

    Raises:
        InvalidChunkSize: If the chunk size is missing or does not divide E
        ConfigError: If the strategy cannot be parsed
    """
    try:
        if isinstance(cfg, str):
            cfg = StrategyConfig.from_label(cfg)
        elif not isinstance(cfg, StrategyConfig):
            cfg = StrategyConfig(**cfg)
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"Invalid strategy configuration: {e}") from e

    if cfg.kind is not StrategyKind.CHUNK:
        return cfg.model_copy(update={"chunk_size": None})

    e = geom.blocks_per_lun_per_zone
    c_s = cfg.chunk_size
    if c_s is None or c_s < 1 or c_s > e or e % c_s:
        raise InvalidChunkSize(
            f"chunk_size={c_s} must divide E={e}",
            chunk_size=c_s, blocks_per_lun_per_zone=e,
        )
    return cfg


def lane_width(strategy: StrategyConfig, geom: DeviceGeometry) -> int:
    """Blocks one lane of a zone spans inside one element."""
    if strategy.kind is StrategyKind.CHUNK:
        return strategy.chunk_size
    if strategy.kind is StrategyKind.STRIPE:
        return 1
    return geom.blocks_per_lun_per_zone


def group_pages(strategy: StrategyConfig, geom: DeviceGeometry) -> int:
    """Pages in one striping group: L x lane width x P."""
    return geom.luns_total * lane_width(strategy, geom) * geom.pages_per_block


def elements_per_zone(strategy: StrategyConfig, geom: DeviceGeometry) -> int:
    """Z: storage elements backing one zone."""
    if strategy.kind is StrategyKind.CHUNK:
        return geom.blocks_per_zone // strategy.chunk_size
    if strategy.kind is StrategyKind.STRIPE:
        return geom.blocks_per_lun_per_zone
    return 1


def element_count(strategy: StrategyConfig, geom: DeviceGeometry) -> int:
    """N: storage elements on the whole device."""
    if strategy.kind is StrategyKind.CHUNK:
        return geom.total_blocks // strategy.chunk_size
    if strategy.kind is StrategyKind.STRIPE:
        return geom.blocks_per_lun
    return geom.physical_zones
