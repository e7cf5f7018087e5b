"""
Experiment grids: phantoms x noise levels x methods.

Every (phantom, snr) group simulates its data once; the methods of a group (one BTD fit per order plus the
optional baseline) then run as independent cells, each writing into its own output directory.
"""

import asyncio
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pydantic
from yaml import YAMLError, safe_load

from . import formats
from .estimator import PeakVolume, fit_btd
from .metrics import score
from .phantom import Phantom, analytic_peaks, fit_peaks, make_phantom, min_length, simulate_dwi
from .tracer import Tractogram, trace, trace_baseline
from ..exceptions.btd_exception import BTDException
from ..exceptions.experiment import ExperimentFailedError
from ..exceptions.formats import RunFileError
from ..logger import get_logger
from ..schemas.experiment import CellResult, Metric, RunConfig, TableLayout
from ..schemas.fit import FitReport
from ..schemas.phantom import PhantomSpec
from ..settings import settings
from ..utils.async_thread import run_in_thread


logger = get_logger(__name__)


@dataclass(frozen=True)
class Group:
    index: tuple[int, int]  # (phantom, snr) position in the run file
    spec: PhantomSpec = field(compare=False)
    snr: float = field(compare=False)

    @property
    def key(self) -> str:
        return f"{self.spec.label}/snr-{self.snr:g}"


@dataclass(frozen=True)
class Cell:
    group: Group
    method: str

    @property
    def key(self) -> str:
        return f"{self.group.key}/{self.method}"

    @property
    def order(self) -> int | None:
        return None if self.method == "baseline" else int(self.method.removeprefix("order-"))


@dataclass(eq=False)
class GroupData:
    phantom: Phantom
    peaks: PeakVolume


def load_run_config(path: Path) -> RunConfig:
    """Read a run file (JSON, or any YAML) and validate it against the run schema."""

    try:
        with path.open() as f:
            raw = safe_load(f)
    except (OSError, YAMLError) as e:
        raise RunFileError(f"cannot read {path}: {e}") from e
    try:
        return pydantic.parse_obj_as(RunConfig, raw)
    except pydantic.ValidationError as e:
        raise RunFileError(f"{path}: {e}") from e


def output_dir(cfg: RunConfig, out: Path | None = None) -> Path:
    return out or cfg.output or Path("out") / cfg.name


def plan(cfg: RunConfig) -> list[Cell]:
    groups = [
        Group((p, s), spec.copy(update={"snr": snr}), snr)
        for p, spec in enumerate(cfg.phantoms)
        for s, snr in enumerate(cfg.snrs)
    ]
    return [Cell(group, method) for group in groups for method in cfg.methods]


def _group_seed(cfg: RunConfig, group: Group) -> int:
    return int(np.random.SeedSequence([cfg.rng_seed, *group.index]).generate_state(1)[0])


def prepare_group(cfg: RunConfig, group: Group) -> GroupData:
    phantom = make_phantom(group.spec)
    if cfg.analytic_peaks and np.isinf(group.snr):
        return GroupData(phantom, analytic_peaks(phantom))
    dwi = simulate_dwi(phantom, group.spec, _group_seed(cfg, group))
    return GroupData(phantom, fit_peaks(dwi, phantom.mask.data, phantom.voxel_size))


def run_cell(cfg: RunConfig, cell: Cell, data: GroupData, out: Path) -> CellResult:
    """Fit (for BTD methods), track from the phantom seeds, score and write every artefact of one cell."""

    ph = data.phantom
    shortest = min_length(ph.spec) if cfg.trace.min_length is None else cfg.trace.min_length
    trace_cfg = cfg.trace.copy(update={"min_length": shortest})
    seeds = ph.seeds()
    directory = out / cell.key
    directory.mkdir(parents=True, exist_ok=True)

    report: FitReport | None = None
    tractogram: Tractogram
    if cell.order is None:
        tractogram = trace_baseline(
            data.peaks, seeds, ph.mask, trace_cfg, target=ph.target_region, provenance={"tracker": "baseline"}
        )
    else:
        fit_cfg = cfg.fit.copy(update={"order": cell.order})
        btd_field, report = fit_btd(data.peaks, ph.seed_region.data, fit_cfg)
        provenance = {"tracker": "btd", "fit": fit_cfg.dict()}
        tractogram = trace(btd_field, seeds, ph.mask, trace_cfg, target=ph.target_region, provenance=provenance)
        formats.write_field(directory / "field.json", btd_field)
        formats.write_fit_report(directory / "fit.json", report)

    result = score(tractogram, ph, cfg.metrics)
    formats.write_tractogram(directory / "tractogram.tsf", tractogram)
    formats.write_score(directory / "score.json", result)
    formats.write_score(directory / "score.csv", result)
    formats.render_svg(tractogram, ph.mask, directory / "render.svg")
    if not len(tractogram):
        logger.warning(f"{cell.key}: every streamline was discarded")
    return CellResult(
        key=cell.key,
        phantom=ph.spec.label,
        snr=cell.group.snr,
        method=cell.method,
        score=result,
        fit=report,
        error=None,
    )


def _failed(cell: Cell, error: Exception) -> CellResult:
    logger.error(f"{cell.key} failed: {error}")
    return CellResult(
        key=cell.key,
        phantom=cell.group.spec.label,
        snr=cell.group.snr,
        method=cell.method,
        score=None,
        fit=None,
        error=str(error),
    )


def _format(value: float | None) -> str:
    return "" if value is None else f"{value:.6g}"


def build_table(cfg: RunConfig, results: list[CellResult]) -> tuple[list[str], list[list[str]]]:
    """
    Aggregate table of a run.

    by_method: one row per method, one column per phantom, snr and metric.
    by_metric: one row per phantom and metric, one column per method and snr.
    """

    by_key = {(r.phantom, r.snr, r.method): r for r in results}
    labels = list(dict.fromkeys(spec.label for spec in cfg.phantoms))

    def value(phantom: str, snr: float, method: str, metric: Metric) -> str:
        result = by_key.get((phantom, snr, method))
        return "" if result is None else _format(result.value(metric))

    if cfg.layout == TableLayout.BY_METHOD:
        columns = [(p, s, m) for p in labels for s in cfg.snrs for m in cfg.metric_columns]
        header = ["method"] + [f"{p} snr={s:g} {m.value}" for p, s, m in columns]
        rows = [[method] + [value(p, s, method, m) for p, s, m in columns] for method in cfg.methods]
    else:
        pairs = [(method, s) for method in cfg.methods for s in cfg.snrs]
        header = ["phantom", "metric"] + [f"{method} snr={s:g}" for method, s in pairs]
        rows = [
            [p, m.value] + [value(p, s, method, m) for method, s in pairs] for p in labels for m in cfg.metric_columns
        ]
    return header, rows


async def run_experiment(cfg: RunConfig, out: Path | None = None, jobs: int | None = None) -> list[CellResult]:
    """Run every cell of the grid with at most `jobs` cells at a time and write the aggregate table."""

    out = output_dir(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    semaphore = asyncio.Semaphore(jobs or settings.jobs)
    cells = plan(cfg)
    groups = list(dict.fromkeys(cell.group for cell in cells))
    logger.info(f"{cfg.name}: {len(groups)} data sets, {len(cells)} cells")

    async def prepare(group: Group) -> GroupData | Exception:
        async with semaphore:
            try:
                return await run_in_thread(prepare_group)(cfg, group)
            except BTDException as e:
                return e

    prepared = dict(zip(groups, await asyncio.gather(*map(prepare, groups))))

    async def execute(cell: Cell) -> CellResult:
        data = prepared[cell.group]
        if isinstance(data, Exception):
            return _failed(cell, data)
        async with semaphore:
            try:
                return await run_in_thread(run_cell)(cfg, cell, data, out)
            except BTDException as e:
                return _failed(cell, e)

    results = list(await asyncio.gather(*map(execute, cells)))

    header, rows = build_table(cfg, results)
    formats.write_csv(out / "table.csv", header, rows)
    cells_json = json.dumps([r.dict(by_alias=True) for r in results], indent=2)
    (out / "cells.json").write_text(cells_json + "\n")

    if failed := [r.key for r in results if r.error is not None]:
        raise ExperimentFailedError(f"{len(failed)} of {len(results)} cells failed: {', '.join(failed)}")
    logger.info(f"{cfg.name}: wrote {out / 'table.csv'}")
    return results
