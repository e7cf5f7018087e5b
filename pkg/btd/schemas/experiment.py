from enum import Enum
from math import inf
from pathlib import Path

from pydantic import BaseModel, Extra, Field, conint, validator

from .fit import FitConfig, FitReport
from .phantom import PhantomSpec
from .score import MetricConfig, ScoreReport
from .trace import TraceConfig


class Metric(str, Enum):
    VC = "vc"
    OL = "ol"
    OR = "or"
    DEVIATION = "deviation"
    TIME = "time"


class TableLayout(str, Enum):
    BY_METHOD = "by_method"
    BY_METRIC = "by_metric"


class RunConfig(BaseModel):
    name: str = Field(regex=r"^[\w.-]+$", description="Run name, also the default output directory name")
    phantoms: list[PhantomSpec] = Field(min_items=1, description="Phantoms to generate; their snr is overridden")
    snrs: list[float] = Field([inf], min_items=1, description="Noise levels, \"inf\" for noiseless")
    orders: list[conint(ge=1, le=8)] = Field(  # type: ignore[valid-type]
        [5], description="Polynomial orders to fit, one method per order"
    )
    baseline: bool = Field(False, description="Also run the peak-following baseline tracker")
    analytic_peaks: bool = Field(False, description="Use the analytic directions instead of fitted peaks at snr inf")
    fit: FitConfig = Field(FitConfig(), description="Fit settings; the order is taken from `orders`")
    trace: TraceConfig = Field(TraceConfig(), description="Tracking settings shared by all methods")
    metrics: MetricConfig = Field(MetricConfig(), description="Scoring settings")
    metric_columns: list[Metric] = Field([Metric.VC, Metric.OL], min_items=1, description="Metrics in the table")
    layout: TableLayout = Field(TableLayout.BY_METHOD, description="Rows per method or rows per metric")
    output: Path | None = Field(None, description="Output directory, defaults to out/<name>")
    rng_seed: int = Field(0, ge=0, description="Root seed of every noise realisation in the run")

    class Config:
        extra = Extra.forbid

    @validator("snrs", each_item=True)
    def _positive_snr(cls, value: float) -> float:  # noqa: N805
        if not value > 0:
            raise ValueError("snr must be positive")
        return value

    @property
    def methods(self) -> list[str]:
        return [f"order-{order}" for order in self.orders] + (["baseline"] if self.baseline else [])


class CellResult(BaseModel):
    key: str = Field(description="Output subdirectory of the cell")
    phantom: str = Field(description="Phantom label")
    snr: float = Field(description="Noise level of the cell")
    method: str = Field(description="order-<n> or baseline")
    score: ScoreReport | None = Field(description="Scores, missing if the cell failed")
    fit: FitReport | None = Field(description="Fit report of BTD methods")
    error: str | None = Field(description="Failure message")

    def value(self, metric: Metric) -> float | None:
        if metric == Metric.TIME:
            return None if self.fit is None else self.fit.elapsed
        if self.score is None:
            return None
        return getattr(self.score, "or_" if metric == Metric.OR else metric.value)  # type: ignore[no-any-return]
