from enum import Enum

from pydantic import BaseModel, Extra, Field, root_validator


class ConstraintMode(str, Enum):
    EXACT = "exact_divergence_free"
    SAMPLED = "sampled"


class SignAlignment(str, Enum):
    PROPAGATION = "propagation"
    REFERENCE_AXIS = "reference_axis"


class MultiPeakPolicy(str, Enum):
    PRIMARY_ONLY = "primary_only"
    NEAREST_TO_FIELD = "nearest_to_field"


class FitConfig(BaseModel):
    order: int = Field(5, ge=1, le=8, description="Polynomial order n of the field")
    constraint_mode: ConstraintMode = Field(
        ConstraintMode.EXACT, description="Divergence constraint: identically zero or zero at voxel centers"
    )
    sign_alignment: SignAlignment = Field(SignAlignment.PROPAGATION, description="How antipodal peaks are signed")
    reference_axis: tuple[float, float, float] | None = Field(
        None, description="Axis used by reference_axis alignment and as fallback for unreachable voxels"
    )
    regularization: float | None = Field(
        None, ge=0, description="Ridge weight; defaults to 1e-8 times the number of masked voxels"
    )
    multi_peak_policy: MultiPeakPolicy = Field(MultiPeakPolicy.PRIMARY_ONLY, description="Peak selection rule")
    iterations: int = Field(2, ge=1, description="Refits for the nearest_to_field policy")
    exclude_flagged: bool = Field(False, description="Leave voxels flagged in the quality mask out of the data term")

    class Config:
        extra = Extra.forbid

    @root_validator(skip_on_failure=True)
    def _check_axis(cls, values: dict) -> dict:  # type: ignore[type-arg]  # noqa: N805
        axis = values.get("reference_axis")
        if values["sign_alignment"] == SignAlignment.REFERENCE_AXIS and axis is None:
            raise ValueError("reference_axis alignment requires a reference axis")
        if axis is not None and not any(axis):
            raise ValueError("reference axis must be nonzero")
        return values


class FitReport(BaseModel):
    order: int = Field(description="Polynomial order of the fitted field")
    residual: float = Field(ge=0, description="Data term ||G - A C||^2 at the solution")
    objective: float = Field(ge=0, description="Minimized objective including the ridge term")
    max_divergence: float = Field(ge=0, description="Largest |div v| over the mask voxel centers")
    condition_estimate: float = Field(description="Ratio of extreme retained singular values")
    rank: int = Field(ge=0, description="Numerical rank of the reduced system")
    iterations_used: int = Field(ge=1, description="Number of least squares solves")
    n_voxels: int = Field(ge=0, description="Number of voxels in the data term (gamma)")
    n_excluded: int = Field(0, ge=0, description="Masked voxels left out because their peak was flagged")
    elapsed: float = Field(ge=0, description="Wall time of the fit in seconds")
