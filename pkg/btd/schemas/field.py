from pydantic import BaseModel, Extra, Field


class FrameModel(BaseModel):
    center: tuple[float, float, float] = Field(description="Frame center (mm)")
    scale: tuple[float, float, float] = Field(description="Frame half-extents (mm)")


class PolyFieldFile(BaseModel):
    order: int = Field(ge=1, le=8, description="Polynomial order")
    frame: FrameModel = Field(description="Normalization frame the monomials are evaluated in")
    coefficients: list[list[float]] = Field(description="Row-major 3 x basis-size coefficient matrix")

    class Config:
        extra = Extra.forbid
