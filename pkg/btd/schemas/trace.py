from enum import Enum

from pydantic import BaseModel, Extra, Field


class StreamlineStatus(str, Enum):
    EXITED_MASK = "exited_mask"
    REACHED_TARGET = "reached_target"
    MAX_STEPS = "max_steps"
    STALLED = "stalled"


class TraceConfig(BaseModel):
    step_size: float = Field(0.2, gt=0, description="Integration step in mm")
    max_steps: int = Field(10_000, ge=1, description="Hard cap on steps per streamline")
    min_length: float | None = Field(
        None, ge=0, description="Streamlines shorter than this (mm) are discarded; unset means 0 or phantom default"
    )
    normalize_field: bool = Field(True, description="Integrate the unit direction instead of the raw field")
    max_angle_per_step: float = Field(60.0, gt=0, le=180, description="Baseline tracker curvature limit (degrees)")

    class Config:
        extra = Extra.forbid
