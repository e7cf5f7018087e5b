from enum import Enum
from math import inf

from pydantic import BaseModel, Extra, Field, root_validator


class PhantomKind(str, Enum):
    HOUGH = "hough"
    SINE = "sine"
    CIRCLE = "circle"


DEFAULT_DIMS = {PhantomKind.HOUGH: (60, 60, 6), PhantomKind.SINE: (100, 100, 6), PhantomKind.CIRCLE: (60, 60, 6)}
DEFAULT_SEEDS = {PhantomKind.HOUGH: 2000, PhantomKind.SINE: 2000, PhantomKind.CIRCLE: 720}


class PhantomSpec(BaseModel):
    kind: PhantomKind = Field(description="Phantom geometry")
    alpha: float = Field(0.3, ge=0, le=1, description="Sine amplitude parameter")
    r1: float = Field(10.0, gt=0, description="Circle inner radius (mm)")
    r2: float = Field(20.0, gt=0, description="Circle outer radius (mm)")
    dims: tuple[int, int, int] | None = Field(None, description="Grid size; defaults depend on the kind")
    voxel_size: tuple[float, float, float] = Field((1.0, 1.0, 1.0), description="Voxel size (mm)")
    snr: float = Field(inf, gt=0, description="Signal to noise ratio, inf for noiseless")
    bvalue: float = Field(1000.0, gt=0, description="b-value (s/mm^2)")
    n_gradients: int = Field(78, ge=6, description="Number of gradient directions")
    seed_count: int | None = Field(None, ge=1, description="Number of seeds; defaults depend on the kind")

    class Config:
        extra = Extra.forbid

    @root_validator(skip_on_failure=True)
    def _fill_defaults(cls, values: dict) -> dict:  # type: ignore[type-arg]  # noqa: N805
        kind = values["kind"]
        if values.get("dims") is None:
            values["dims"] = DEFAULT_DIMS[kind]
        if values.get("seed_count") is None:
            values["seed_count"] = DEFAULT_SEEDS[kind]
        if any(n <= 0 for n in values["dims"]):
            raise ValueError("dims must be positive")
        if any(s <= 0 for s in values["voxel_size"]):
            raise ValueError("voxel_size must be positive")
        if kind == PhantomKind.CIRCLE and not values["r1"] < values["r2"]:
            raise ValueError("circle radii must satisfy 0 < r1 < r2")
        return values

    @property
    def label(self) -> str:
        match self.kind:
            case PhantomKind.SINE:
                return f"sine-a{self.alpha:g}"
            case PhantomKind.CIRCLE:
                return f"circle-r{self.r1:g}-{self.r2:g}"
        return self.kind.value

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        assert self.dims is not None  # filled by the validator
        return self.dims

    @property
    def seeds(self) -> int:
        assert self.seed_count is not None  # filled by the validator
        return self.seed_count
