"""Per-problem estimators.

Every argmin/argmax is taken over a finite candidate set on which the
criterion is exact, and ties always resolve to the smallest optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .model_zoo import SampleBatch


class WindowEstimate(NamedTuple):
    value: float
    vacuous: bool


def _first_min(values: np.ndarray, tol: float = 0.0) -> int:
    """Index of the first entry within ``tol`` of the minimum."""
    return int(np.flatnonzero(values <= values.min() + tol)[0])


def _sorted_xy(batch: SampleBatch) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(batch.x, kind="stable")
    return np.asarray(batch.x)[order], np.asarray(batch.y)[order]


# ---------------------------------------------------------------------------
# Change-point
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SplitFit:
    alpha_hat: float
    beta_hat: float
    d_hat: float
    sse: float
    split_index: int  # number of points in the left segment


def fit_changepoint_joint(batch: SampleBatch) -> SplitFit:
    """Joint least-squares fit of a two-level step.

    Splits are scanned between consecutive distinct order statistics;
    ``d_hat`` is the largest covariate in the left segment.
    """
    x, y = _sorted_xy(batch)
    n = len(x)
    if n < 2 or x[0] == x[-1]:
        raise ValueError("no admissible split")
    yc = y - y.mean()
    k = np.arange(1, n)
    s_left = np.cumsum(yc)[:-1]
    s_right = s_left[-1] + yc[-1] - s_left
    total = float(np.dot(yc, yc))
    sse = total - s_left**2 / k - s_right**2 / (n - k)
    admissible = x[1:] > x[:-1]
    sse = np.where(admissible, sse, np.inf)
    i = _first_min(sse, tol=1e-12 * max(total, 1e-300))
    kk = i + 1
    alpha = float(y[:kk].mean())
    beta = float(y[kk:].mean())
    return SplitFit(alpha, beta, float(x[i]), float(max(sse[i], 0.0)), kk)


def plugin_candidates(x_sorted: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    inside = x_sorted[(x_sorted >= lo) & (x_sorted <= hi)]
    return np.concatenate(([lo], inside, [hi]))


def fit_changepoint_plugin(batch2: SampleBatch, alpha_hat: float, beta_hat: float,
                           window: tuple[float, float]) -> WindowEstimate:
    """Minimize the plug-in two-level SSE over ``d`` in ``window``.

    ``SSE(d) = sum (Y - alpha)^2 1[X <= d] + (Y - beta)^2 1[X > d]`` is a
    right-continuous step in ``d``; it is evaluated at the window endpoints
    and every order statistic inside the window.
    """
    lo, hi = window
    if not hi >= lo:
        raise ValueError("empty window")
    if alpha_hat == beta_hat:
        raise ValueError("alpha_hat equals beta_hat: criterion is flat")
    x, y = _sorted_xy(batch2)
    if not np.any((x >= lo) & (x <= hi)):
        return WindowEstimate(0.5 * (lo + hi), True)
    cand = plugin_candidates(x, window)
    # SSE(d) = sum (Y - beta)^2 + sum_{X <= d} [(Y - alpha)^2 - (Y - beta)^2]
    diff = (y - alpha_hat) ** 2 - (y - beta_hat) ** 2
    csum = np.concatenate(([0.0], np.cumsum(diff)))
    crit = csum[np.searchsorted(x, cand, side="right")]
    scale = float(np.abs(diff).sum()) + 1e-300
    return WindowEstimate(float(cand[_first_min(crit, tol=1e-13 * scale)]), False)


def plugin_simplified_criterion(x, y, alpha_hat, beta_hat, d) -> np.ndarray:
    """``sgn(beta - alpha) * mean((Y - (alpha + beta)/2) 1[X <= d])`` at each ``d``."""
    x = np.asarray(x)
    y = np.asarray(y)
    mid = 0.5 * (alpha_hat + beta_hat)
    s = np.sign(beta_hat - alpha_hat)
    d = np.atleast_1d(d)
    return np.array([s * np.sum((y - mid) * (x <= t)) / len(x) for t in d])


# ---------------------------------------------------------------------------
# Isotonic regression
# ---------------------------------------------------------------------------
@njit(cache=True)
def _pava(values, weights):
    n = values.shape[0]
    level = np.empty(n)
    wsum = np.empty(n)
    size = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        level[top] = values[i]
        wsum[top] = weights[i]
        size[top] = 1
        while top > 0 and level[top - 1] > level[top]:
            w = wsum[top - 1] + wsum[top]
            level[top - 1] = (wsum[top - 1] * level[top - 1] + wsum[top] * level[top]) / w
            wsum[top - 1] = w
            size[top - 1] += size[top]
            top -= 1
    out = np.empty(n)
    pos = 0
    for j in range(top + 1):
        for _ in range(size[j]):
            out[pos] = level[j]
            pos += 1
    return out


def pava(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto nondecreasing sequences."""
    v = np.ascontiguousarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 1:
        raise ValueError("values must be a nonempty 1-d sequence")
    w = np.ones_like(v) if weights is None else np.ascontiguousarray(weights, dtype=float)
    if w.shape != v.shape:
        raise ValueError("values and weights must have equal length")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return _pava(v, w)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function on ``domain``.

    ``levels[j]`` holds on ``[knots[j], knots[j+1])``; the last level holds
    up to and including ``domain[1]``. ``knots[0] == domain[0]``.
    """

    knots: np.ndarray
    levels: np.ndarray
    domain: tuple[float, float]

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if len(knots) != len(levels) or len(knots) == 0:
            raise ValueError("need one level per knot")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if knots[0] != self.domain[0] or knots[-1] > self.domain[1]:
            raise ValueError("knots must start at the domain's left end")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any((xa < lo) | (xa > hi)):
            raise ValueError("evaluation point outside the domain")
        idx = np.searchsorted(self.knots, xa, side="right") - 1
        out = self.levels[idx]
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "levels": self.levels.tolist(),
                "domain": list(self.domain)}

    @classmethod
    def from_dict(cls, data: dict) -> "StepFunction":
        if set(data) != {"knots", "levels", "domain"}:
            raise ValueError("step function needs exactly knots, levels, domain")
        return cls(np.asarray(data["knots"]), np.asarray(data["levels"]), tuple(data["domain"]))


def isotonic_fit(batch: SampleBatch, domain: tuple[float, float] | None = None) -> StepFunction:
    """Isotonic least-squares fit of ``y`` on ``x`` as a right-continuous step.

    Tied covariates are pooled first. The first level is extended down to
    the domain's left end.
    """
    x, y = _sorted_xy(batch)
    if len(x) == 0:
        raise ValueError("empty batch")
    if domain is None:
        domain = batch.design.support
    ux, start = np.unique(x, return_index=True)
    counts = np.diff(np.append(start, len(x)))
    means = np.add.reduceat(y, start) / counts
    fitted = pava(means, counts.astype(float))
    jumps = np.flatnonzero(np.diff(fitted) != 0) + 1
    knots = np.concatenate(([domain[0]], ux[jumps]))
    levels = np.concatenate((fitted[:1], fitted[jumps]))
    return StepFunction(knots, levels, domain)


def isotonic_inverse(fit: StepFunction, t0: float) -> float:
    """Right-continuous inverse ``sup{d in domain: fit(d) <= t0}``."""
    j = int(np.searchsorted(fit.levels, t0, side="right")) - 1
    if j < 0:
        return fit.domain[0]
    if j == len(fit.levels) - 1:
        return fit.domain[1]
    return float(fit.knots[j + 1])


def switching_argmin(batch: SampleBatch, t0: float,
                     domain: tuple[float, float] | None = None) -> float:
    """Smallest minimizer of ``d -> sum_{X <= d} (Y - t0)`` over ``domain``.

    The process is 0 left of the first covariate, so ``domain[0]`` is the
    answer whenever every partial sum is positive.
    """
    x, y = _sorted_xy(batch)
    if len(x) == 0:
        raise ValueError("empty batch")
    if domain is None:
        domain = batch.design.support
    # evaluate only at the last copy of tied covariates
    last = np.append(x[1:] != x[:-1], True)
    proc = np.concatenate(([0.0], np.cumsum(y - t0)[last]))
    where = np.concatenate(([domain[0]], x[last]))
    scale = float(np.abs(y - t0).sum()) + 1e-300
    return float(where[_first_min(proc, tol=1e-13 * scale)])


def order_statistic_index(x_sorted: np.ndarray, value: float) -> int:
    """Index of the largest order statistic ``<= value`` (0 if none)."""
    return max(int(np.searchsorted(x_sorted, value, side="right")) - 1, 0)


# ---------------------------------------------------------------------------
# Mode
# ---------------------------------------------------------------------------
def shorth_criterion(x_sorted: np.ndarray, y_sorted: np.ndarray, d, halfwidth: float) -> np.ndarray:
    """Binned sum ``sum Y 1[|X - d| <= halfwidth]`` at each ``d``."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    csum = np.concatenate(([0.0], np.cumsum(y_sorted)))
    left = np.searchsorted(x_sorted, d - halfwidth, side="left")
    right = np.searchsorted(x_sorted, d + halfwidth, side="right")
    return csum[right] - csum[left]


def shorth_mode(batch: SampleBatch, halfwidth: float,
                search: tuple[float, float]) -> WindowEstimate:
    """Smallest maximizer of the binned-sum criterion over ``search``.

    Candidates are ``x_i - b``, ``x_i + b`` and the search endpoints, plus
    the midpoint of each gap between consecutive candidates so that
    plateaus open at both ends are represented. Bin edges for the
    ``x_i -/+ b`` candidates are pinned to ``x_i`` exactly.
    """
    b = float(halfwidth)
    if b <= 0:
        raise ValueError("halfwidth must be positive")
    lo, hi = search
    if not hi >= lo:
        raise ValueError("empty search interval")
    x, y = _sorted_xy(batch)
    n = len(x)
    csum = np.concatenate(([0.0], np.cumsum(y)))
    first = np.searchsorted(x, x, side="left")  # first copy of each x
    past = np.searchsorted(x, x, side="right")  # one past last copy

    # d = x_i + b: bin [x_i, x_i + 2b]
    d_plus = x + b
    val_plus = csum[np.searchsorted(x, d_plus + b, side="right")] - csum[first]
    # d = x_i - b: bin [x_i - 2b, x_i]
    d_minus = x - b
    val_minus = csum[past] - csum[np.searchsorted(x, d_minus - b, side="left")]

    cand = np.concatenate((d_minus, d_plus))
    vals = np.concatenate((val_minus, val_plus))
    keep = (cand >= lo) & (cand <= hi)
    if n == 0 or not keep.any():
        return WindowEstimate(0.5 * (lo + hi), True)
    cand, vals = cand[keep], vals[keep]

    ends = np.array([lo, hi])
    mids_base = np.unique(np.concatenate((ends, cand)))
    mids = 0.5 * (mids_base[1:] + mids_base[:-1])
    extra = np.concatenate((ends, mids))
    cand = np.concatenate((cand, extra))
    vals = np.concatenate((vals, shorth_criterion(x, y, extra, b)))

    order = np.lexsort((-vals, cand))  # by location; equal locations keep max
    cand, vals = cand[order], vals[order]
    scale = float(np.abs(y).sum()) + 1e-300
    best = vals.max()
    i = int(np.flatnonzero(vals >= best - 1e-13 * scale)[0])
    return WindowEstimate(float(cand[i]), False)
