from typing import Literal

from pydantic import BaseModel, Extra, Field, conint


ENDIAN_MAGIC = "0000803f"  # 1.0f little-endian


class VolumeHeader(BaseModel):
    dims: tuple[conint(gt=0), conint(gt=0), conint(gt=0)] = Field(description="Grid size")  # type: ignore[valid-type]
    voxel_size: tuple[float, float, float] = Field(description="Voxel size (mm)")
    dtype: Literal["f32", "u8"] = Field(description="Element type of the payload")
    channels: conint(gt=0) = Field(1, description="Values per voxel")  # type: ignore[valid-type]
    order: Literal["x-fastest"] = Field("x-fastest", description="Element order of the payload")
    magic: str = Field(ENDIAN_MAGIC, description="Hex bytes of 1.0f as stored by the writer")

    class Config:
        extra = Extra.forbid
