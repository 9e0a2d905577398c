"""Run traces, Monte-Carlo update variance, percentile bands and rate fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from ..algorithms.updates import batch_directions
from ..errors import SchemaError
from ..mdp import IidSampler, ObservationBatch
from ..oracle import ExactModel

TRACE_COLUMNS = (
    "samples_consumed",
    "iter",
    "grad_norm_sq",
    "min_grad_norm_sq",
    "tracking_error",
    "mc_variance",
    "mc_sq_error_literal",
)

# How mc_variance relates to the raw update G (written into manifests).
VARIANCE_CONVENTION = (
    "mc_variance = mean_i ||2*Gbar_i + grad J||^2 = 4 * mean_i ||Gbar_i + grad J / 2||^2, "
    "where Gbar_i is the algorithm's update direction (batch mean of G) on probe i and "
    "E[G(theta, omega*)] = -grad J / 2; mc_sq_error_literal = mean_i ||Gbar_i - grad J||^2"
)


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


class TraceRow(NamedTuple):
    samples_consumed: int
    iter: int
    grad_norm_sq: float
    min_grad_norm_sq: float
    tracking_error: float
    mc_variance: float | None
    mc_sq_error_literal: float | None


@dataclass
class MetricsTrace:
    """Per-evaluation records of one run.

    ``min_grad_norm_sq`` is maintained on append, so it is non-increasing by
    construction.  ``meta`` carries run facts such as the stopping index.
    """

    rows: list[TraceRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, samples: int, it: int, grad_norm_sq: float, tracking: float,
               mc_variance: float | None = None, mc_literal: float | None = None):
        if self.rows and samples <= self.rows[-1].samples_consumed:
            raise ValueError("samples_consumed must be strictly increasing")
        best = grad_norm_sq if not self.rows else min(self.rows[-1].min_grad_norm_sq, grad_norm_sq)
        self.rows.append(TraceRow(samples, it, grad_norm_sq, best, tracking, mc_variance, mc_literal))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = TRACE_COLUMNS.index(name)
        return np.array([np.nan if r[idx] is None else r[idx] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([r.samples_consumed, r.iter] + [_fmt(v) for v in r[2:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsTrace":
        reader = csv.DictReader(io.StringIO(text))
        missing = [c for c in TRACE_COLUMNS[:5] if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"trace CSV lacks columns {missing}")
        trace = cls()
        for rec in reader:
            opt = [float(rec[c]) if rec.get(c) else None for c in TRACE_COLUMNS[5:]]
            row = TraceRow(int(rec["samples_consumed"]), int(rec["iter"]),
                           float(rec["grad_norm_sq"]), float(rec["min_grad_norm_sq"]),
                           float(rec["tracking_error"]), *opt)
            if trace.rows:
                prev = trace.rows[-1]
                if row.samples_consumed <= prev.samples_consumed:
                    raise SchemaError("samples_consumed is not strictly increasing")
                if row.min_grad_norm_sq > prev.min_grad_norm_sq:
                    raise SchemaError("min_grad_norm_sq increases")
            trace.rows.append(row)
        return trace


# -- update variance --------------------------------------------------------------


def _update_directions(model: ExactModel, theta, omega, batch: ObservationBatch, batch_size: int):
    G, _ = batch_directions(model.features, model.spec, model.gamma, theta, omega, batch)
    if batch_size > 1:
        G = G.reshape(-1, batch_size, G.shape[1]).mean(axis=1)
    return G


def update_error_moments(model: ExactModel, theta, omega, batch: ObservationBatch,
                         batch_size: int = 1, weights=None, grad=None) -> tuple[float, float]:
    """``(scaled, literal)`` squared errors of the update direction, averaged over probes."""
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if grad is None:
        grad = model.gradient(theta)
    G = _update_directions(model, theta, omega, batch, batch_size)
    scaled = np.sum((2.0 * G + grad) ** 2, axis=1)
    literal = np.sum((G - grad) ** 2, axis=1)
    if weights is None:
        return float(scaled.mean()), float(literal.mean())
    w = np.asarray(weights, dtype=float)
    return float(w @ scaled / w.sum()), float(w @ literal / w.sum())


def mc_variance(model: ExactModel, theta, omega, n_samples: int = 100, seed: int = 0,
                batch_size: int = 1, sampler: IidSampler | None = None) -> float:
    """Monte-Carlo squared error of the stochastic update around the true gradient.

    Draws ``n_samples`` independent probes from the stationary distribution;
    each probe averages ``G`` over ``batch_size`` fresh tuples, mirroring the
    update an algorithm with that batch size applies.  The value is reported in
    ``||. - grad J||^2`` units, see :data:`VARIANCE_CONVENTION`.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if sampler is None:
        sampler = IidSampler(model.mdp, model.policy, seed, mu=model.mu, stream="mc")
    batch = sampler.draw(n_samples * batch_size)
    return update_error_moments(model, theta, omega, batch, batch_size)[0]


def exact_update_variance(model: ExactModel, theta, omega, batch_size: int = 1) -> float:
    """Exact value that :func:`mc_variance` estimates (enumeration over ``(s, a, s')``)."""
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    batch, w = enumerate_tuples(model)
    G, _ = batch_directions(model.features, model.spec, model.gamma, theta, omega, batch)
    mean = w @ G
    spread = w @ np.sum((G - mean) ** 2, axis=1)
    bias = 2.0 * mean + model.gradient(theta)
    return float(bias @ bias + 4.0 * spread / batch_size)


def enumerate_tuples(model: ExactModel) -> tuple[ObservationBatch, np.ndarray]:
    """Every ``(s, a, s')`` with positive probability, and that probability."""
    p = model.transition_weights()
    s, a, s2 = np.nonzero(p > 0)
    r = model.mdp.reward[s, a, s2]
    return ObservationBatch(s, a, r, s2), p[s, a, s2]


class Evaluator:
    """Observer that fills a :class:`MetricsTrace` from exact oracle quantities.

    It owns a private Monte-Carlo stream, so evaluating never perturbs a run.
    """

    def __init__(self, model: ExactModel, seed: int, n_mc: int = 100):
        self.model = model
        self.n_mc = n_mc
        self._sampler = IidSampler(model.mdp, model.policy, seed, mu=model.mu, stream="mc") if n_mc else None

    def record(self, trace: MetricsTrace, samples: int, it: int, theta, omega, batch_size: int = 1):
        model = self.model
        grad, w_star = model.evaluate(theta)
        tracking = float(np.linalg.norm(omega - w_star))
        mc = lit = None
        if self._sampler is not None:
            batch = self._sampler.draw(self.n_mc * batch_size)
            mc, lit = update_error_moments(model, theta, omega, batch, batch_size, grad=grad)
        trace.append(samples, it, float(grad @ grad), tracking, mc, lit)


# -- aggregation ------------------------------------------------------------------


@dataclass
class BandSummary:
    grid: np.ndarray
    p05: np.ndarray
    p50: np.ndarray
    p95: np.ndarray
    metric: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["samples_consumed", "p05", "p50", "p95"])
        for row in zip(self.grid, self.p05, self.p50, self.p95):
            w.writerow([int(row[0])] + [_fmt(v) for v in row[1:]])
        return buf.getvalue()


def nearest_rank(values: np.ndarray, pct: float, axis: int = 0) -> np.ndarray:
    """Nearest-rank percentile: the ``ceil(pct/100 * n)``-th smallest value."""
    values = np.sort(np.asarray(values, dtype=float), axis=axis)
    n = values.shape[axis]
    rank = max(1, math.ceil(round(pct * n / 100.0, 9)))
    return np.take(values, rank - 1, axis=axis)


def aggregate_bands(traces: list[MetricsTrace], metric: str, grid,
                    labels: list[str] | None = None) -> BandSummary:
    """Interpolate each trace onto ``grid`` (samples consumed) and take 5/50/95 percentiles."""
    if len(traces) < 2:
        raise ValueError("need at least two traces to form bands")
    grid = np.asarray(grid, dtype=float)
    curves = []
    for i, tr in enumerate(traces):
        x = tr.column("samples_consumed")
        if len(x) == 0 or x[0] > grid[0] or x[-1] < grid[-1]:
            name = labels[i] if labels else f"trace #{i}"
            span = (x[0], x[-1]) if len(x) else ()
            raise ValueError(f"{name} covers samples {span}, shorter than grid [{grid[0]}, {grid[-1]}]")
        curves.append(np.interp(grid, x, tr.column(metric)))
    curves = np.array(curves)
    return BandSummary(grid, nearest_rank(curves, 5), nearest_rank(curves, 50),
                       nearest_rank(curves, 95), metric)


class RateFit(NamedTuple):
    slope: float
    stderr: float
    intercept: float


def rate_fit(points) -> RateFit:
    """Least-squares slope of ``log y`` against ``log T``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (T, value) pairs")
    if np.any(pts <= 0):
        raise ValueError("rate_fit needs positive T and values")
    T = np.unique(pts[:, 0])
    if len(T) < 3 or T[-1] / T[0] < 10.0:
        raise ValueError("rate_fit needs >= 3 distinct T values spanning a decade")
    res = stats.linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return RateFit(float(res.slope), float(res.stderr), float(res.intercept))
