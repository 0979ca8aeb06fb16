"""Budget-splitting orchestration of the two-stage procedures.

Stage one spends ``n1 = round(p n)`` points on a uniform design over [0, 1]
and produces a pilot estimate ``d1``. Stage two spends the remaining
``n2 = n - n1`` points inside the zoomed window ``d1 +/- K n1**(-gamma)``
and re-estimates with the problem's second-stage criterion.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from . import estimators as est
from .model_zoo import (
    DesignSpec,
    ModelSpec,
    SpecError,
    SymmetricDensity,
    _check_keys,
    sample_batch,
    second_stage_interval,
)

PROBLEMS = ("changepoint", "inverse_isotonic", "classification", "mode")
PROBLEM_KIND = {
    "changepoint": "changepoint",
    "inverse_isotonic": "monotone",
    "classification": "binary_monotone",
    "mode": "unimodal",
}
KIND_PROBLEM = {v: k for k, v in PROBLEM_KIND.items()}


class ExperimentError(Exception):
    """An experiment cannot run as configured (exit status 2 in the CLI)."""


class GateViolation(ExperimentError, ValueError):
    """A zoom exponent or halfwidth violates the problem's validity gate."""


@dataclass(frozen=True)
class TwoStageConfig:
    problem: str = "changepoint"
    n: int = 4096
    p: float = 0.5
    gamma: float = 0.3
    K: float = 1.0
    b: float = 0.1
    seed: int = 0
    second_stage_design: str = "uniform"  # "uniform" or "symmetric"
    density: str = "triangular"  # symmetric second stage only
    density_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.problem not in PROBLEMS:
            raise SpecError(f"two_stage.problem: unknown problem {self.problem!r}")
        if self.second_stage_design not in ("uniform", "symmetric"):
            raise SpecError("two_stage.second_stage_design: must be uniform or symmetric")
        if not 0.0 < self.p < 1.0:
            raise SpecError("two_stage.p: must lie in (0, 1)")
        if self.n < 4:
            raise SpecError("two_stage.n: must be at least 4")
        if self.gamma <= 0 or self.K <= 0 or self.b <= 0:
            raise SpecError("two_stage: gamma, K and b must be positive")

    @property
    def n1(self) -> int:
        return int(round(self.p * self.n))

    @property
    def n2(self) -> int:
        return self.n - self.n1

    def replace(self, **kw) -> "TwoStageConfig":
        return TwoStageConfig(**{**asdict(self), **kw})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, where: str = "two_stage") -> "TwoStageConfig":
        _check_keys(data, {f.name for f in fields(cls)}, where)
        try:
            return cls(**data)
        except SpecError as exc:
            msg = str(exc)
            raise SpecError(where + msg[len("two_stage"):] if msg.startswith("two_stage") else
                            f"{where}: {msg}") from None
        except TypeError as exc:
            raise SpecError(f"{where}: {exc}") from None


def check_gates(model: ModelSpec, cfg: TwoStageConfig) -> None:
    """Raise :class:`GateViolation` naming the violated inequality."""
    if PROBLEM_KIND[cfg.problem] != model.kind:
        raise GateViolation(f"model kind {model.kind!r} does not match problem {cfg.problem!r}")
    if cfg.problem == "changepoint":
        nu = 1.0 - 2.0 * model.xi
        if not cfg.gamma < nu:
            raise GateViolation(
                f"γ < 1−2ξ violated: gamma={cfg.gamma} but 1-2*xi={nu:g}")
    elif not cfg.gamma < 1.0 / 3.0:
        raise GateViolation(f"γ < 1/3 violated: gamma={cfg.gamma}")
    if cfg.problem == "mode" and not cfg.K > cfg.b:
        raise GateViolation(f"K > b violated: K={cfg.K}, b={cfg.b}")


@dataclass
class EstimateRecord:
    d1_hat: float
    d2_hat: float
    n1: int
    n2: int
    window: tuple[float, float]
    alpha_hat: float | None = None
    beta_hat: float | None = None
    clip_flag: bool = False
    vacuous_flag: bool = False
    covered: bool = True  # d0 inside the stage-two window
    wall_time: float = field(default=0.0, compare=False)


def _stage_one(model: ModelSpec, problem: str, batch, b: float, domain):
    """Stage-one estimate: (d_hat, alpha_hat, beta_hat)."""
    if problem == "changepoint":
        fit = est.fit_changepoint_joint(batch)
        return fit.d_hat, fit.alpha_hat, fit.beta_hat
    if problem in ("inverse_isotonic", "classification"):
        fit = est.isotonic_fit(batch, domain)
        return est.isotonic_inverse(fit, model.t0), None, None
    lo, hi = max(domain[0], b), min(domain[1], 1.0 - b)
    return est.shorth_mode(batch, b, (lo, hi)).value, None, None


def zoom_design(cfg: TwoStageConfig, center: float, halfwidth: float) -> DesignSpec:
    if cfg.second_stage_design == "symmetric":
        return DesignSpec.symmetric_zoom(center, halfwidth,
                                         SymmetricDensity(cfg.density, cfg.density_rate))
    return DesignSpec.uniform_zoom(center, halfwidth)


def run_two_stage(model: ModelSpec, cfg: TwoStageConfig, rng: np.random.Generator,
                  halfwidth: float | None = None) -> EstimateRecord:
    """One replication of the two-stage procedure.

    ``halfwidth`` overrides ``K n1**(-gamma)`` (used by the practical
    halfwidth rule); the mode bin and search domain scale with it.
    """
    check_gates(model, cfg)
    t_start = time.perf_counter()
    n, n1, n2 = cfg.n, cfg.n1, cfg.n2
    if n1 < 2 or n2 < 1:
        raise ExperimentError(f"budget split leaves n1={n1}, n2={n2}")

    stage1 = sample_batch(model, DesignSpec.uniform_global(), n1, n, rng, stage=1)
    d1, alpha, beta = _stage_one(model, cfg.problem, stage1, cfg.b, (0.0, 1.0))

    scale = float(n1) ** (-cfg.gamma) if halfwidth is None else halfwidth / cfg.K
    h = cfg.K * scale
    design = zoom_design(cfg, d1, h)
    window = design.support
    if not window[1] > window[0]:
        raise ExperimentError("empty design support")
    stage2 = sample_batch(model, design, n2, n, rng, stage=2)

    vacuous = False
    if cfg.problem == "changepoint":
        if alpha == beta:
            d2, vacuous = 0.5 * (window[0] + window[1]), True
        else:
            d2, vacuous = est.fit_changepoint_plugin(stage2, alpha, beta, window)
    elif cfg.problem in ("inverse_isotonic", "classification"):
        d2 = est.isotonic_inverse(est.isotonic_fit(stage2, window), model.t0)
    else:
        sh = (cfg.K - cfg.b) * scale
        search = (max(d1 - sh, 0.0), min(d1 + sh, 1.0))
        d2, vacuous = est.shorth_mode(stage2, cfg.b * scale, search)
    return EstimateRecord(
        d1_hat=float(d1), d2_hat=float(d2), n1=n1, n2=n2, window=window,
        alpha_hat=alpha, beta_hat=beta, clip_flag=design.clipped, vacuous_flag=bool(vacuous),
        covered=window[0] <= model.d0 <= window[1],
        wall_time=time.perf_counter() - t_start,
    )


def run_one_stage(model: ModelSpec, n: int, design: DesignSpec, rng: np.random.Generator,
                  problem: str | None = None, b: float = 0.1) -> EstimateRecord:
    """Stage-one estimator on all ``n`` points drawn from ``design``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    problem = problem or KIND_PROBLEM[model.kind]
    t_start = time.perf_counter()
    batch = sample_batch(model, design, n, n, rng, stage=1)
    d1, alpha, beta = _stage_one(model, problem, batch, b, design.support)
    return EstimateRecord(
        d1_hat=float(d1), d2_hat=float(d1), n1=n, n2=0, window=design.support,
        alpha_hat=alpha, beta_hat=beta, clip_flag=design.clipped,
        wall_time=time.perf_counter() - t_start,
    )


def stage_one_rate(model: ModelSpec, problem: str) -> float:
    """Exponent ``nu`` with ``n1**nu (d1 - d0) = O_p(1)``."""
    return 1.0 - 2.0 * model.xi if problem == "changepoint" else 1.0 / 3.0


def practical_halfwidth(problem: str, n1: int, tau: float, limit_quantile: float,
                        xi: float = 0.0) -> float:
    """Halfwidth ``C / n1**nu`` with ``C`` the (1 - tau/2) limit quantile."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if limit_quantile <= 0:
        raise ValueError("limit_quantile must be positive")
    rate = 1.0 - 2.0 * xi if problem == "changepoint" else 1.0 / 3.0
    return limit_quantile / float(n1) ** rate
