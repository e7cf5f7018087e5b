"""
On-disk representations: raw volumes with a JSON sidecar, text tractograms, polynomial field files, gradient
tables, score reports and SVG renderings.
"""

import csv
import json
import re
from dataclasses import dataclass
from math import prod
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pydantic
from jinja2 import Environment, FileSystemLoader
from numpy.typing import ArrayLike, NDArray

from .estimator import PeakVolume
from .phantom import DwiVolume
from .polyfield import CoordFrame, PolyField
from .tracer import Streamline, Tractogram
from ..exceptions.btd_exception import BTDException, InvalidArgumentError
from ..exceptions.formats import (
    DimensionMismatchError,
    FieldFileError,
    HeaderError,
    MalformedLineError,
    TruncatedPayloadError,
    UnknownDtypeError,
)
from ..logger import get_logger
from ..schemas.field import FrameModel, PolyFieldFile
from ..schemas.fit import FitReport
from ..schemas.phantom import PhantomSpec
from ..schemas.score import CSV_COLUMNS, ScoreReport
from ..schemas.trace import StreamlineStatus
from ..schemas.volume import ENDIAN_MAGIC, VolumeHeader
from ..settings import settings
from ..utils.grid import VoxelGrid


logger = get_logger(__name__)

env = Environment(loader=FileSystemLoader(Path(__file__).parent / "../templates"), autoescape=True)

DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
TSF_HEADER = re.compile(r"^#TSF1 step=(\S+) count=(\d+)$")


@dataclass(eq=False)
class Volume:
    data: NDArray[Any]  # (X, Y, Z) or (X, Y, Z, C)
    voxel_size: NDArray[np.float64]

    @property
    def dims(self) -> tuple[int, int, int]:
        x, y, z = self.data.shape[:3]
        return x, y, z


def volume_paths(path: Path) -> tuple[Path, Path]:
    """The JSON sidecar and the raw payload belonging to a volume path (any suffix is replaced)."""

    return path.with_suffix(".json"), path.with_suffix(".raw")


def write_volume(path: Path, data: ArrayLike, voxel_size: ArrayLike) -> None:
    arr = np.asarray(data)
    if arr.ndim not in (3, 4):
        raise InvalidArgumentError(f"volumes have 3 or 4 axes, got {arr.ndim}")
    dtype = "u8" if arr.dtype in (np.bool_, np.uint8) else "f32"
    channels = 1 if arr.ndim == 3 else arr.shape[3]
    header = VolumeHeader(
        dims=arr.shape[:3],
        voxel_size=tuple(np.asarray(voxel_size, dtype=np.float64).reshape(3).tolist()),
        dtype=dtype,
        channels=channels,
    )

    header_path, payload_path = volume_paths(path)
    header_path.write_text(header.json(indent=2) + "\n")
    payload_path.write_bytes(arr.astype(DTYPES[dtype]).tobytes(order="F"))
    logger.debug(f"wrote {dtype} volume {arr.shape} to {payload_path}")


def _read_header(path: Path) -> VolumeHeader:
    try:
        raw = json.loads(path.read_bytes())
    except OSError as e:
        raise HeaderError(f"cannot read {path}: {e}") from e
    except (ValueError, RecursionError) as e:
        raise HeaderError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise HeaderError(f"{path}: header must be a JSON object")
    if "dtype" in raw and not (isinstance(raw["dtype"], str) and raw["dtype"] in DTYPES):
        raise UnknownDtypeError(f"{path}: unknown dtype {raw['dtype']!r}")
    try:
        header = pydantic.parse_obj_as(VolumeHeader, raw)
    except pydantic.ValidationError as e:
        raise HeaderError(f"{path}: {e}") from e
    if header.magic != ENDIAN_MAGIC:
        raise HeaderError(f"{path}: byte order marker {header.magic!r} is not little-endian 1.0f")
    return header


def read_volume(path: Path) -> Volume:
    header_path, payload_path = volume_paths(path)
    header = _read_header(header_path)
    dtype = DTYPES[header.dtype]

    try:
        payload = payload_path.read_bytes()
    except OSError as e:
        raise TruncatedPayloadError(f"cannot read {payload_path}: {e}") from e
    expected = prod(header.dims) * header.channels * dtype.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(f"{payload_path}: payload ends at byte {len(payload)}, expected {expected}")
    if len(payload) > expected:
        raise TruncatedPayloadError(f"{payload_path}: unexpected data from byte {expected} to {len(payload)}")

    shape = (*header.dims, header.channels)
    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    data = data[..., 0] if header.channels == 1 else data
    data = data.astype(np.float64 if header.dtype == "f32" else np.uint8)
    return Volume(data=data, voxel_size=np.array(header.voxel_size))


def read_mask(path: Path) -> VoxelGrid:
    vol = read_volume(path)
    if vol.data.ndim != 3:
        raise DimensionMismatchError(f"{path}: a mask has one channel, got {vol.data.shape[3]}")
    return VoxelGrid(vol.data != 0, vol.voxel_size)


def read_peak_volume(peaks_path: Path, mask_path: Path, quality_path: Path | None = None) -> PeakVolume:
    peaks = read_volume(peaks_path)
    mask = read_mask(mask_path)
    if peaks.data.shape != (*mask.dims, 3):
        raise DimensionMismatchError(f"peaks {peaks.data.shape} do not match mask {mask.dims} x 3")
    if not np.allclose(peaks.voxel_size, mask.voxel_size):
        raise DimensionMismatchError("peaks and mask have different voxel sizes")
    quality = None
    if quality_path is not None:
        flags = read_mask(quality_path)
        if flags.dims != mask.dims:
            raise DimensionMismatchError(f"quality {flags.dims} does not match mask {mask.dims}")
        quality = flags.data

    # f32 storage loses the exact unit length
    data = peaks.data.copy()
    norms = np.linalg.norm(data, axis=-1, keepdims=True)
    np.divide(data, norms, out=data, where=norms > 0)
    return PeakVolume(mask.data, data, mask.voxel_size, quality=quality)


def write_tractogram(path: Path, t: Tractogram) -> None:
    lines = [f"#TSF1 step={t.step_size:.6g} count={len(t)}"]
    for sl in t.streamlines:
        coords = ";".join(f"{x:.6f},{y:.6f},{z:.6f}" for x, y, z in sl.points)
        lines.append(f"{sl.status.value};{coords}")
    path.write_text("\n".join(lines) + "\n")
    logger.debug(f"wrote {len(t)} streamlines to {path}")


def _parse_streamline(line: str, number: int) -> Streamline:
    status, *triples = line.split(";")
    try:
        parsed = StreamlineStatus(status)
    except ValueError:
        raise MalformedLineError(f"line {number}: unknown status {status!r}") from None
    if not triples:
        raise MalformedLineError(f"line {number}: streamline without points")

    points = []
    for triple in triples:
        try:
            point = [float(c) for c in triple.split(",")]
        except ValueError:
            raise MalformedLineError(f"line {number}: invalid coordinate {triple!r}") from None
        if len(point) != 3 or not all(np.isfinite(point)):
            raise MalformedLineError(f"line {number}: expected three finite coordinates, got {triple!r}")
        points.append(point)
    return Streamline(np.array(points), parsed)


def read_tractogram(path: Path) -> Tractogram:
    raw = path.read_bytes()
    try:
        text = raw.decode()
    except UnicodeDecodeError as e:
        line = raw[: e.start].count(b"\n") + 1
        raise MalformedLineError(f"line {line}: not valid UTF-8") from None

    lines = text.splitlines()
    match = TSF_HEADER.match(lines[0]) if lines else None
    if match is None:
        raise MalformedLineError("line 1: missing #TSF1 header")
    try:
        step = float(match.group(1))
    except ValueError:
        raise MalformedLineError(f"line 1: invalid step {match.group(1)!r}") from None
    if not step > 0:
        raise MalformedLineError(f"line 1: step must be positive, got {step}")

    streamlines = [_parse_streamline(line, i) for i, line in enumerate(lines[1:], start=2) if line]
    if len(streamlines) != int(match.group(2)):
        raise MalformedLineError(f"line 1: header announces {match.group(2)} streamlines, found {len(streamlines)}")
    return Tractogram(streamlines, step)


def write_field(path: Path, field: PolyField) -> None:
    model = PolyFieldFile(
        order=field.order,
        frame=FrameModel(center=tuple(field.frame.center.tolist()), scale=tuple(field.frame.scale.tolist())),
        coefficients=field.coeffs.tolist(),
    )
    path.write_text(model.json(indent=2) + "\n")


def read_field(path: Path) -> PolyField:
    try:
        model = PolyFieldFile.parse_raw(path.read_bytes())
    except (OSError, ValueError, RecursionError) as e:  # pydantic.ValidationError is a ValueError
        raise FieldFileError(f"{path}: {e}") from e
    try:
        return PolyField(model.order, np.array(model.coefficients), CoordFrame(model.frame.center, model.frame.scale))
    except BTDException as e:
        raise FieldFileError(f"{path}: {e}") from e


def read_phantom_spec(path: Path) -> PhantomSpec:
    try:
        return PhantomSpec.parse_raw(path.read_bytes())
    except (OSError, ValueError, RecursionError) as e:
        raise HeaderError(f"{path}: {e}") from e


def write_gradients(path: Path, dwi: DwiVolume) -> None:
    rows = (f"{gx:.6f} {gy:.6f} {gz:.6f} {b:g}" for (gx, gy, gz), b in zip(dwi.gradients, dwi.bvals))
    path.write_text("\n".join(rows) + "\n")


def write_model(path: Path, model: pydantic.BaseModel) -> None:
    path.write_text(model.json(indent=2, by_alias=True) + "\n")


def write_score(path: Path, report: ScoreReport) -> None:
    """Score report as JSON, or as a one-row CSV when the path ends in .csv."""

    if path.suffix == ".csv":
        write_csv(path, CSV_COLUMNS, [report.row()])
    else:
        write_model(path, report)


def write_fit_report(path: Path, report: FitReport) -> None:
    write_model(path, report)


def write_csv(path: Path, header: list[str], rows: Iterable[list[str]]) -> None:
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _outline(projection: NDArray[np.bool_]) -> list[tuple[int, int, int, int]]:
    """Unit voxel edges separating the projection from its complement, in voxel coordinates."""

    padded = np.pad(projection, 1)
    segments = []
    # vertical edges at x = i between columns i - 1 and i
    for i, j in np.argwhere(padded[1:, 1:-1] != padded[:-1, 1:-1]):
        segments.append((int(i), int(j), int(i), int(j) + 1))
    for i, j in np.argwhere(padded[1:-1, 1:] != padded[1:-1, :-1]):
        segments.append((int(i), int(j), int(i) + 1, int(j)))
    return segments


def render_svg(t: Tractogram, mask: VoxelGrid, path: Path, plane: str = "xy", scale: float | None = None) -> None:
    """Project mask and streamlines onto the xy plane; y grows upwards as in the phantom coordinates."""

    if plane != "xy":
        raise InvalidArgumentError(f"unsupported projection plane {plane!r}")
    px = settings.svg_scale if scale is None else scale
    sx, sy = mask.voxel_size[:2] * px
    width, height = mask.dims[0] * sx, mask.dims[1] * sy

    outline = [
        (x1 * sx, height - y1 * sy, x2 * sx, height - y2 * sy) for x1, y1, x2, y2 in _outline(mask.data.any(axis=2))
    ]
    polylines = [
        (sl.status.value, " ".join(f"{x * px:.2f},{height - y * px:.2f}" for x, y in sl.points[:, :2]))
        for sl in t.streamlines
    ]
    content = env.get_template("tractogram.svg").render(
        width=f"{width:.2f}", height=f"{height:.2f}", outline=outline, polylines=polylines
    )
    path.write_text(content)
    logger.debug(f"rendered {len(polylines)} streamlines to {path}")
