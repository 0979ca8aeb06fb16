"""Limit laws of the second-stage estimators and their scaling constants.

Every limit is the location of the extremum of a drifted two-sided
Brownian motion ``a B(h) + drift(h)``. One grid simulator serves all of
them; the closed-form helpers below give the scale factors that map the
normalized laws onto the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, stats

from .two_stage import ExperimentError


class TruncationError(ExperimentError):
    """Too many simulated extrema landed on the edge of the grid."""


class DegenerateLimit(ExperimentError):
    """A scaling constant is zero or undefined."""


@dataclass(frozen=True)
class PathGrid:
    step: float = 1e-3
    range: float = 8.0

    def __post_init__(self) -> None:
        if self.step <= 0 or self.range <= 0:
            raise ValueError("step and range must be positive")
        m = self.range / self.step
        if abs(m - round(m)) > 1e-6 * m or round(m) < 10:
            raise ValueError("range/step must be an integer count >= 10")

    @property
    def half_count(self) -> int:
        return int(round(self.range / self.step))

    @property
    def points(self) -> np.ndarray:
        m = self.half_count
        return np.arange(-m, m + 1) * self.step


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``c |h|`` (``abs``) or ``c h^2`` (``quadratic``).

    ``sign="min"`` locates the argmin of ``a B + drift``; ``sign="max"``
    locates the argmax of ``a B - drift``.
    """

    family: str = "abs"
    c: float = 1.0
    sign: str = "min"
    diffusion: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in ("abs", "quadratic"):
            raise ValueError(f"unknown drift family {self.family!r}")
        if self.sign not in ("min", "max"):
            raise ValueError("sign must be 'min' or 'max'")
        if self.c <= 0 or self.diffusion <= 0:
            raise ValueError("drift c and diffusion must be positive")

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return self.c * (np.abs(h) if self.family == "abs" else h * h)

    @property
    def rescale(self) -> float:
        """``lambda`` with argext(a B + c drift) = lambda * argext(B + drift)."""
        ratio = self.diffusion / self.c
        return ratio**2 if self.family == "abs" else ratio ** (2.0 / 3.0)


DEFAULT_GRIDS = {"abs": PathGrid(1e-3, 16.0), "quadratic": PathGrid(1e-3, 8.0)}


def two_sided_paths(grid: PathGrid, count: int, rng: np.random.Generator,
                    diffusion: float = 1.0) -> np.ndarray:
    """``count`` two-sided Brownian paths on ``grid`` with ``B(0) = 0``."""
    m = grid.half_count
    sd = diffusion * math.sqrt(grid.step)
    inc = rng.standard_normal((count, 2, m)) * sd
    right = np.cumsum(inc[:, 0], axis=1)
    left = np.cumsum(inc[:, 1], axis=1)[:, ::-1]
    zero = np.zeros((count, 1))
    return np.concatenate((left, zero, right), axis=1)


def argext_batch(drift: DriftSpec, grid: PathGrid, count: int, rng: np.random.Generator,
                 chunk: int = 256, check_truncation: bool = True) -> np.ndarray:
    """``count`` draws of the extremizer location, smallest on ties."""
    h = grid.points
    dr = drift(h)
    out = np.empty(count)
    edge = 0
    m2 = 2 * grid.half_count
    for start in range(0, count, chunk):
        k = min(chunk, count - start)
        paths = two_sided_paths(grid, k, rng, drift.diffusion)
        if drift.sign == "min":
            idx = np.argmin(paths + dr, axis=1)
        else:
            idx = np.argmax(paths - dr, axis=1)
        edge += int(np.count_nonzero((idx == 0) | (idx == m2)))
        out[start:start + k] = h[idx]
    if check_truncation and edge > 0.001 * count:
        raise TruncationError(
            f"{edge} of {count} extrema on the grid edge |h| = {grid.range}; widen the range")
    return out


def argext_two_sided_bm(drift: DriftSpec, grid: PathGrid, rng: np.random.Generator) -> float:
    """One draw of the extremizer location."""
    return float(argext_batch(drift, grid, 1, rng, check_truncation=False)[0])


def normalized_law(problem: str) -> DriftSpec:
    """Drift of the normalized limit law attached to each problem."""
    if problem == "changepoint":
        return DriftSpec("abs", 1.0, "min")
    if problem == "mode":
        return DriftSpec("quadratic", 1.0, "max")
    return DriftSpec("quadratic", 1.0, "min")


# ---------------------------------------------------------------------------
# Scaling constants
# ---------------------------------------------------------------------------
def changepoint_scale(K: float, sigma: float, c0: float, p: float, gamma: float,
                      psi0: float | None = None) -> float:
    """``8 K sigma^2 / (c0^2 (1-p) p^gamma)``, divided by ``2 psi0`` if given."""
    lam = 8.0 * K * sigma**2 / (c0**2 * (1.0 - p) * p**gamma)
    if psi0 is not None:
        lam /= 2.0 * psi0
    return lam


def isotonic_scale(K: float, sigma: float, r_prime_d0: float, p: float, gamma: float,
                   r_d0: float | None = None) -> float:
    """Scale of the two-stage inverse isotonic limit.

    With ``r_d0`` given (classification) the noise variance is
    ``r(d0) (1 - r(d0))`` and ``sigma`` is ignored.
    """
    if r_prime_d0 == 0:
        raise DegenerateLimit("flat curve at threshold")
    var = sigma**2 if r_d0 is None else r_d0 * (1.0 - r_d0)
    return (8.0 * var * K / (r_prime_d0**2 * p**gamma * (1.0 - p))) ** (1.0 / 3.0)


def one_stage_isotonic_scale(var: float, r_prime_d0: float, density_d0: float) -> float:
    """Scale of ``n^(1/3) (d - d0)`` for a one-stage design with density ``g``."""
    if r_prime_d0 == 0:
        raise DegenerateLimit("flat curve at threshold")
    return (4.0 * var / (r_prime_d0**2 * density_d0)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ModeScales:
    a: float
    c: float
    one_stage: float  # (a/c)^(2/3)
    two_stage_constant: float


def mode_scales(K, b, m_d0, m_d0_plus_b, m_prime_d0_plus, m_prime_d0_plus_b,
                sigma, p, gamma) -> ModeScales:
    """One-stage pair ``(a, c)`` and the two-stage cusp constant."""
    if m_prime_d0_plus == 0:
        raise DegenerateLimit("cusp required: m'(d0+) = 0 makes the two-stage limit blow up")
    a = math.sqrt(2.0 * (m_d0_plus_b**2 + sigma**2))
    c = -m_prime_d0_plus_b
    if c <= 0:
        raise DegenerateLimit("m'(d0 + b) must be negative")
    two = (4.0 * K * (m_d0**2 + sigma**2)
           / (m_prime_d0_plus**2 * p**gamma * (1.0 - p))) ** (1.0 / 3.0)
    return ModeScales(a, c, (a / c) ** (2.0 / 3.0), two)


def optimal_p(problem: str, xi: float | None = None) -> float:
    if problem == "changepoint":
        xi = 0.0 if xi is None else xi
        if not 0.0 <= xi < 0.5:
            raise ValueError("xi must lie in [0, 1/2)")
        return (1.0 - 2.0 * xi) / (2.0 * (1.0 - xi))
    if problem in ("inverse_isotonic", "classification", "mode"):
        return 0.25
    raise ValueError(f"unknown problem {problem!r}")


# ---------------------------------------------------------------------------
# Closed form for the |v|-drift law
# ---------------------------------------------------------------------------
# For X = argmax W(t) - |t|/2 the density is
#   f(x) = 3/2 e^{|x|} Phi(-3/2 sqrt|x|) - 1/2 Phi(-1/2 sqrt|x|),
# and argmin{B(v) + |v|} has the law of X / 4.
def _abs_density_x(x: float) -> float:
    x = abs(x)
    r = math.sqrt(x)
    return 1.5 * math.exp(x + stats.norm.logsf(1.5 * r)) - 0.5 * stats.norm.sf(0.5 * r)


def abs_law_pdf(v) -> np.ndarray:
    """Density of argmin{B(v) + |v|}."""
    v = np.asarray(v, dtype=float)
    out = 4.0 * np.vectorize(_abs_density_x, otypes=[float])(4.0 * v)
    return out if out.ndim else float(out)


def abs_law_tail(a: float) -> float:
    """``P(|A| > a)`` for ``A = argmin{B(v) + |v|}``."""
    if a <= 0:
        return 1.0
    return 2.0 * integrate.quad(_abs_density_x, 4.0 * a, np.inf, limit=200)[0]


def abs_law_abs_quantile(level: float) -> float:
    """``c`` with ``P(|A| <= c) = level``; usable far into the tail."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    target = 1.0 - level
    hi = 1.0
    while abs_law_tail(hi) > target:
        hi *= 2.0
    return optimize.brentq(lambda a: abs_law_tail(a) - target, 0.0, hi, xtol=1e-10)


def empirical_quantile(samples, q: float) -> float:
    """Order-statistic quantile with linear interpolation."""
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("empty sample")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    return float(np.quantile(s, q, method="linear"))


def ks_two_sample(a, b) -> float:
    """Sup-distance between the two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate((a, b))
    fa = np.searchsorted(a, pts, side="right") / len(a)
    fb = np.searchsorted(b, pts, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))
