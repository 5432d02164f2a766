"""
Schemas for report tables.
"""
from typing import Dict

from pydantic import BaseModel, Field


class ReportTables(BaseModel):
    """Report tables written into a run directory."""
    run_dir: str = Field(..., description="Directory holding metrics.csv and summary.json")
    tables: Dict[str, str] = Field(..., description="Table name -> CSV path")
