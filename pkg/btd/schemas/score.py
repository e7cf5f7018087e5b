from pydantic import BaseModel, Extra, Field


CSV_COLUMNS = ["vc", "ol", "or", "deviation", "n_streamlines", "n_valid"]


class MetricConfig(BaseModel):
    dilation: int = Field(1, ge=0, description="6-connected dilation (voxels) of the truth mask for OR and VC")
    signed_deviation: bool = Field(False, description="Sum signed radial errors instead of their magnitudes")

    class Config:
        extra = Extra.forbid


class ScoreReport(BaseModel):
    vc: float = Field(ge=0, le=1, description="Fraction of valid connections")
    ol: float = Field(ge=0, le=1, description="Fraction of truth voxels reached")
    or_: float = Field(ge=0, alias="or", description="Voxels reached outside the dilated truth, per truth voxel")
    deviation: float | None = Field(description="Mean radial error in voxels (circle data only)")
    n_streamlines: int = Field(ge=0, description="Number of scored streamlines")
    n_valid: int = Field(ge=0, description="Number of valid connections")

    class Config:
        allow_population_by_field_name = True

    def row(self) -> list[str]:
        values = self.dict(by_alias=True)
        return ["" if values[c] is None else f"{values[c]:.6g}" for c in CSV_COLUMNS]
