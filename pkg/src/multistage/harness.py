"""Replicated experiments that turn asymptotic statements into finite-n checks.

Each replication draws from its own stream
``derive_stream(seed, "<experiment>/<tag>/n=<n>", rep)`` so results do not
depend on how replications are spread over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import limit_laws as ll
from .estimators import fit_changepoint_joint
from .model_zoo import DesignSpec, ModelSpec, SymmetricDensity, eval_mean, excess_risk, sample_batch
from .streams import derive_stream
from .two_stage import (
    EstimateRecord,
    ExperimentError,
    TwoStageConfig,
    check_gates,
    run_one_stage,
    run_two_stage,
)

DEFAULT_N_GRID = tuple(2**k for k in range(10, 16))
VACUOUS_LIMIT = 0.05


# ---------------------------------------------------------------------------
# Replication plumbing
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Job:
    model: ModelSpec
    cfg: TwoStageConfig
    stream_id: str
    rep: int
    one_stage: bool = False
    design: DesignSpec | None = None
    halfwidth: float | None = None


def run_job(job: Job) -> EstimateRecord:
    rng = derive_stream(job.cfg.seed, job.stream_id, job.rep)
    if job.one_stage:
        design = job.design or DesignSpec.uniform_global()
        return run_one_stage(job.model, job.cfg.n, design, rng, job.cfg.problem, job.cfg.b)
    return run_two_stage(job.model, job.cfg, rng, halfwidth=job.halfwidth)


def map_jobs(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map; ``jobs > 1`` fans out over processes without changing results."""
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def replicate(model: ModelSpec, cfg: TwoStageConfig, stream_id: str, reps: int, *,
              one_stage: bool = False, design: DesignSpec | None = None,
              halfwidth: float | None = None, jobs: int = 1) -> list[EstimateRecord]:
    if not one_stage:
        check_gates(model, cfg)
    items = [Job(model, cfg, stream_id, r, one_stage, design, halfwidth) for r in range(reps)]
    return map_jobs(run_job, items, jobs)


def _flags(records: list[EstimateRecord]) -> dict[str, int]:
    return {
        "clip": sum(r.clip_flag for r in records),
        "vacuous": sum(r.vacuous_flag for r in records),
        "uncovered": sum(not r.covered for r in records),
    }


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------
def summarize(errors: np.ndarray, summary: str = "rmse") -> float:
    e = np.asarray(errors, dtype=float)
    if summary == "rmse":
        return float(np.sqrt(np.mean(e * e)))
    if summary == "mae":
        return float(np.mean(np.abs(e)))
    if summary == "mean":
        return float(np.mean(e))
    raise ValueError(f"unknown summary {summary!r}")


def ols_slope(log_n: np.ndarray, log_y: np.ndarray) -> tuple[float, float, float]:
    """Slope, intercept and standard error of the slope."""
    X = np.column_stack((np.ones_like(log_n), log_n))
    coef, *_ = np.linalg.lstsq(X, log_y, rcond=None)
    resid = log_y - X @ coef
    dof = max(len(log_n) - 2, 1)
    s2 = float(resid @ resid) / dof
    sxx = float(np.sum((log_n - log_n.mean()) ** 2))
    return float(coef[1]), float(coef[0]), math.sqrt(s2 / sxx)


def fit_rate(n_grid: Sequence[int], errors_by_n: Sequence[np.ndarray], summary: str = "rmse",
             blocks: int = 10) -> dict[str, Any]:
    """Log-log OLS of the error summary on ``n`` with a seed-block jackknife.

    Replications are split into ``blocks`` contiguous blocks; the jackknife
    refits with one block removed at a time. ``slope_se`` is the larger of
    the OLS and jackknife standard errors.
    """
    log_n = np.log(np.asarray(n_grid, dtype=float))
    values = np.array([summarize(e, summary) for e in errors_by_n])
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ExperimentError("error summaries must be finite and positive")
    slope, intercept, se_ols = ols_slope(log_n, np.log(values))
    reps = min(len(e) for e in errors_by_n)
    blocks = min(blocks, reps)
    jack = []
    if blocks >= 2:
        edges = np.linspace(0, reps, blocks + 1).astype(int)
        for j in range(blocks):
            keep = np.r_[0:edges[j], edges[j + 1]:reps]
            v = np.array([summarize(np.asarray(e)[keep], summary) for e in errors_by_n])
            jack.append(ols_slope(log_n, np.log(v))[0])
    if jack:
        jack = np.asarray(jack)
        se_jack = math.sqrt((blocks - 1) / blocks * float(np.sum((jack - jack.mean()) ** 2)))
    else:
        se_jack = 0.0
    return {
        "values": values.tolist(),
        "slope": slope,
        "intercept": intercept,
        "slope_se_ols": se_ols,
        "slope_se_jackknife": se_jack,
        "slope_se": max(se_ols, se_jack, 1e-300),
    }


def target_slope(model: ModelSpec, cfg: TwoStageConfig, one_stage: bool = False) -> float:
    """Theoretical log-log slope of the error summary."""
    g = cfg.gamma
    if cfg.problem == "changepoint":
        nu = 1.0 - 2.0 * model.xi
        return -nu if one_stage else -(nu + g)
    if one_stage:
        return -1.0 / 3.0
    if cfg.problem == "mode":
        cusp = model.asym is not None or model.curve.family == "exp_cusp"
        if cusp:
            return -(1.0 + g) / 3.0
        if cfg.second_stage_design == "symmetric":
            return -1.0 / 3.0
        return -(1.0 - g) / 3.0
    return -(1.0 + g) / 3.0


@dataclass
class RateReport:
    experiment_id: str
    n_grid: list[int]
    rmse: list[float]
    slope: float
    slope_se: float
    slope_se_ols: float
    slope_se_jackknife: float
    target_slope: float
    reps: int
    flags: list[dict[str, int]]
    valid: bool
    summary: str = "rmse"
    config: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        return [{"n": n, self.summary: v, **f}
                for n, v, f in zip(self.n_grid, self.rmse, self.flags)]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def rate_experiment(model: ModelSpec, cfg: TwoStageConfig, n_grid: Sequence[int] = DEFAULT_N_GRID,
                    reps: int = 500, *, one_stage: bool = False, design: DesignSpec | None = None,
                    summary: str = "rmse", experiment_id: str = "rate",
                    jobs: int = 1) -> RateReport:
    """RMSE of ``d2 - d0`` across ``n_grid`` and its fitted log-log slope."""
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing with at least 4 entries")
    if reps < 100:
        raise ValueError("reps must be at least 100")
    tag = "one" if one_stage else "two"
    errors, flags = [], []
    for n in n_grid:
        recs = replicate(model, cfg.replace(n=n), f"{experiment_id}/{tag}/n={n}", reps,
                         one_stage=one_stage, design=design, jobs=jobs)
        errors.append(np.array([r.d2_hat - model.d0 for r in recs]))
        flags.append(_flags(recs))
    fit = fit_rate(n_grid, errors, summary)
    valid = all(f["vacuous"] <= VACUOUS_LIMIT * reps for f in flags)
    return RateReport(
        experiment_id=experiment_id, n_grid=n_grid, rmse=fit["values"], slope=fit["slope"],
        slope_se=fit["slope_se"], slope_se_ols=fit["slope_se_ols"],
        slope_se_jackknife=fit["slope_se_jackknife"],
        target_slope=target_slope(model, cfg, one_stage), reps=reps, flags=flags, valid=valid,
        summary=summary,
        config={"model": model.to_dict(), "two_stage": cfg.to_dict(), "one_stage": one_stage,
                "design": design.to_dict() if design else None},
    )


# ---------------------------------------------------------------------------
# Stage-one limit laws and the practical halfwidth
# ---------------------------------------------------------------------------
def mode_curve_values(model: ModelSpec, b: float) -> dict[str, float]:
    """Profile quantities entering the mode constants."""
    if model.asym is not None:
        raise ll.DegenerateLimit("asymmetric signal has no symmetric limit law")
    c = model.curve
    return {
        "m_d0": c.value(0.0),
        "m_d0_plus_b": c.value(b),
        "m_prime_d0_plus": c.derivative(0.0),
        "m_prime_d0_plus_b": c.derivative(b),
    }


def stage_one_scale(model: ModelSpec, problem: str, p: float, b: float = 0.1) -> float:
    """Scale of the stage-one limit ``n1**nu (d1 - d0)`` on a uniform design.

    The change-point jump is ``c0 n**(-xi) = c0 p**xi n1**(-xi)``, so its
    stage-one scale picks up ``p**(-2 xi)``.
    """
    if problem == "changepoint":
        return 4.0 * model.sigma**2 * p ** (-2.0 * model.xi) / model.c0**2
    if problem in ("inverse_isotonic", "classification"):
        r_d0 = model.curve.value(model.d0)
        var = r_d0 * (1.0 - r_d0) if problem == "classification" else model.sigma**2
        return ll.one_stage_isotonic_scale(var, model.curve.derivative(model.d0), 1.0)
    v = mode_curve_values(model, b)
    return ll.mode_scales(1.0, b, v["m_d0"], v["m_d0_plus_b"], -1.0, v["m_prime_d0_plus_b"],
                          model.sigma, 0.5, 0.0).one_stage


def limit_sample(problem: str, draws: int, seed: int, experiment_id: str) -> np.ndarray:
    """Monte Carlo draws of the normalized limit law for ``problem``."""
    drift = ll.normalized_law(problem)
    rng = derive_stream(seed, f"{experiment_id}/oracle", 0)
    return ll.argext_batch(drift, ll.DEFAULT_GRIDS[drift.family], draws, rng)


def stage_one_quantile(model: ModelSpec, problem: str, p: float, tau: float, b: float,
                       oracle: np.ndarray | None) -> float:
    """``C_{tau/2}``: the two-sided ``tau`` quantile of the stage-one limit.

    The change-point law has a closed form and is used directly, which
    allows tiny ``tau``; the cube-root laws use the simulated ``oracle``.
    """
    if problem == "changepoint":
        q = ll.abs_law_abs_quantile(1.0 - tau)
    else:
        if oracle is None or tau * len(oracle) < 10:
            raise ValueError("tau too small for the number of oracle draws")
        q = ll.empirical_quantile(np.abs(oracle), 1.0 - tau)
    return stage_one_scale(model, problem, p, b) * q


# A window miss costs far more than the change-point second-stage error, so
# misses must be negligible there; the cube-root problems tolerate 1%.
DEFAULT_TAU = {"changepoint": 1e-6, "inverse_isotonic": 0.01, "classification": 0.01,
               "mode": 0.01}


# ---------------------------------------------------------------------------
# Allocation
# ---------------------------------------------------------------------------
@dataclass
class AllocationReport:
    experiment_id: str
    p_grid: list[float]
    variance: list[float]
    mse: list[float]
    halfwidth: list[float]
    empirical_argmin: float
    optimal_p: float
    n: int
    reps: int
    flags: list[dict[str, int]]
    valid: bool
    config: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        return [{"p": p, "variance": v, "mse": m, "halfwidth": h, **f}
                for p, v, m, h, f in zip(self.p_grid, self.variance, self.mse,
                                         self.halfwidth, self.flags)]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def allocation_experiment(model: ModelSpec, cfg: TwoStageConfig, p_grid: Sequence[float],
                          n: int, reps: int, *, tau: float | None = None, oracle_draws: int = 4000,
                          experiment_id: str = "allocate", jobs: int = 1) -> AllocationReport:
    """Variance of ``d2`` per stage-one fraction ``p``.

    The zoom halfwidth follows the practical rule ``C_{tau/2} / n1**nu`` so
    that the window tracks the stage-one precision at every ``p``.
    """
    p_grid = [float(p) for p in p_grid]
    if len(p_grid) < 5 or not all(0.0 < p < 1.0 for p in p_grid):
        raise ValueError("p_grid needs at least 5 values inside (0, 1)")
    tau = DEFAULT_TAU[cfg.problem] if tau is None else tau
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    oracle = None
    if cfg.problem != "changepoint":
        oracle = limit_sample(cfg.problem, oracle_draws, cfg.seed, experiment_id)
    nu = 1.0 - 2.0 * model.xi if cfg.problem == "changepoint" else 1.0 / 3.0
    var, mse, widths, flags = [], [], [], []
    for p in p_grid:
        c = cfg.replace(n=n, p=p)
        C = stage_one_quantile(model, cfg.problem, c.n1 / n, tau, cfg.b, oracle)
        h = C / float(c.n1) ** nu
        recs = replicate(model, c, f"{experiment_id}/p={p!r}", reps, halfwidth=h, jobs=jobs)
        e = np.array([r.d2_hat - model.d0 for r in recs])
        var.append(float(np.var(e, ddof=1)))
        mse.append(float(np.mean(e * e)))
        widths.append(h)
        flags.append(_flags(recs))
    return AllocationReport(
        experiment_id=experiment_id, p_grid=p_grid, variance=var, mse=mse, halfwidth=widths,
        empirical_argmin=p_grid[int(np.argmin(var))],
        optimal_p=ll.optimal_p(cfg.problem, model.xi), n=n, reps=reps, flags=flags,
        valid=all(f["vacuous"] <= VACUOUS_LIMIT * reps for f in flags),
        config={"model": model.to_dict(), "two_stage": cfg.to_dict(), "tau": tau,
                "oracle_draws": oracle_draws},
    )


# ---------------------------------------------------------------------------
# Distributional checks
# ---------------------------------------------------------------------------
@dataclass
class DistCheckReport:
    experiment_id: str
    n: int
    reps: int
    ks_stat: float
    scale_used: float
    rate: float
    oracle_draws: int
    flags: dict[str, int]
    config: dict[str, Any] = field(default_factory=dict)
    scaled_errors: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out.pop("scaled_errors")
        return out


def limit_normalization(model: ModelSpec, cfg: TwoStageConfig) -> tuple[float, float]:
    """``(rate, constant)`` with ``n**rate (d2 - d0) / constant`` -> normalized law.

    Constants use the realized fraction ``n1 / n`` in place of ``p``.
    """
    p = cfg.n1 / cfg.n
    g = cfg.gamma
    psi0 = None
    if cfg.second_stage_design == "symmetric":
        psi0 = float(SymmetricDensity(cfg.density, cfg.density_rate).pdf(0.0))
    if cfg.problem == "changepoint":
        const = ll.changepoint_scale(cfg.K, model.sigma, model.c0, p, g, psi0)
        rate = 1.0 + g - 2.0 * model.xi
    elif cfg.problem in ("inverse_isotonic", "classification"):
        r_d0 = model.curve.value(model.d0) if cfg.problem == "classification" else None
        const = ll.isotonic_scale(cfg.K, model.sigma, model.curve.derivative(model.d0), p, g,
                                  r_d0=r_d0)
        if psi0 is not None:
            const /= (2.0 * psi0) ** (1.0 / 3.0)
        rate = (1.0 + g) / 3.0
    else:
        v = mode_curve_values(model, cfg.b)
        if v["m_prime_d0_plus"] == 0:
            if cfg.second_stage_design != "symmetric":
                raise ll.DegenerateLimit("smooth profile with a uniform zoom has no limit law")
            one = stage_one_scale(model, "mode", p, cfg.b)
            return 1.0 / 3.0, p ** (-1.0 / 3.0) * one
        const = ll.mode_scales(cfg.K, cfg.b, v["m_d0"], v["m_d0_plus_b"], v["m_prime_d0_plus"],
                               v["m_prime_d0_plus_b"], model.sigma, p, g).two_stage_constant
        rate = (1.0 + g) / 3.0
    if not const > 0:
        raise ll.DegenerateLimit("degenerate limit: scaling constant is zero")
    return rate, const


def dist_check(model: ModelSpec, cfg: TwoStageConfig, n: int, reps: int, oracle_draws: int,
               *, scale_factor: float = 1.0, experiment_id: str = "dist-check",
               jobs: int = 1) -> DistCheckReport:
    """KS distance between normalized second-stage errors and the limit law."""
    if reps < 1000 or oracle_draws < 1000:
        raise ValueError("reps and oracle_draws must be at least 1000")
    c = cfg.replace(n=n)
    rate, const = limit_normalization(model, c)
    const *= scale_factor
    recs = replicate(model, c, f"{experiment_id}/n={n}", reps, jobs=jobs)
    scaled = np.array([(r.d2_hat - model.d0) for r in recs]) * float(n) ** rate / const
    oracle = limit_sample(c.problem, oracle_draws, c.seed, experiment_id)
    return DistCheckReport(
        experiment_id=experiment_id, n=n, reps=reps, ks_stat=ll.ks_two_sample(scaled, oracle),
        scale_used=const, rate=rate, oracle_draws=oracle_draws, flags=_flags(recs),
        config={"model": model.to_dict(), "two_stage": c.to_dict(),
                "scale_factor": scale_factor},
        scaled_errors=scaled.tolist(),
    )


# ---------------------------------------------------------------------------
# Classification risk
# ---------------------------------------------------------------------------
@dataclass
class RiskReport:
    experiment_id: str
    n_grid: list[int]
    two_stage_excess: list[float]
    one_stage_excess: list[float]
    two_stage_slope: float
    two_stage_slope_se: float
    one_stage_slope: float
    one_stage_slope_se: float
    two_stage_target: float
    one_stage_target: float
    crossover_n: int | None
    min_excess: float
    reps: int
    config: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        return [{"n": n, "two_stage_excess": a, "one_stage_excess": b}
                for n, a, b in zip(self.n_grid, self.two_stage_excess, self.one_stage_excess)]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def excess_risk_experiment(model: ModelSpec, cfg: TwoStageConfig,
                           n_grid: Sequence[int] = DEFAULT_N_GRID, reps: int = 500,
                           oracle_density: DesignSpec | None = None, *,
                           experiment_id: str = "risk", jobs: int = 1) -> RiskReport:
    """Mean excess risk of the two-stage and the oracle-design one-stage classifiers."""
    if model.kind != "binary_monotone":
        raise ValueError("excess-risk comparison needs a binary_monotone model")
    if not model.curve.derivative(model.d0) > 0:
        raise ValueError("curve must be strictly increasing through 1/2")
    design = oracle_density or DesignSpec.symmetric_zoom(model.d0, min(model.d0, 1 - model.d0))
    n_grid = [int(n) for n in n_grid]
    two, one, lowest = [], [], math.inf
    for n in n_grid:
        c = cfg.replace(n=n)
        r2 = replicate(model, c, f"{experiment_id}/two/n={n}", reps, jobs=jobs)
        r1 = replicate(model, c, f"{experiment_id}/one/n={n}", reps, one_stage=True,
                       design=design, jobs=jobs)
        e2 = excess_risk(model.curve, [r.d2_hat for r in r2], model.d0)
        e1 = excess_risk(model.curve, [r.d2_hat for r in r1], model.d0)
        lowest = min(lowest, float(e2.min()), float(e1.min()))
        two.append(e2)
        one.append(e1)
    f2 = fit_rate(n_grid, two, "mean")
    f1 = fit_rate(n_grid, one, "mean")
    crossover = None
    for n, a, b in zip(n_grid, f2["values"], f1["values"]):
        if a < b and crossover is None:
            crossover = n
        elif a >= b:
            crossover = None
    g = cfg.gamma
    return RiskReport(
        experiment_id=experiment_id, n_grid=n_grid, two_stage_excess=f2["values"],
        one_stage_excess=f1["values"], two_stage_slope=f2["slope"],
        two_stage_slope_se=f2["slope_se"], one_stage_slope=f1["slope"],
        one_stage_slope_se=f1["slope_se"], two_stage_target=-2.0 * (1.0 + g) / 3.0,
        one_stage_target=-2.0 / 3.0, crossover_n=crossover, min_excess=lowest, reps=reps,
        config={"model": model.to_dict(), "two_stage": cfg.to_dict(),
                "oracle_density": design.to_dict()},
    )


# ---------------------------------------------------------------------------
# Diagnostics: estimated-centre fluctuation and asymmetric-signal bias
# ---------------------------------------------------------------------------
def pi0_squared(sigma: float, p: float, gamma: float, xi: float, h: float, K: float) -> float:
    """Limit variance ``sigma^2 p^gamma (1-p)^(1-2 xi) |h| / K``."""
    return sigma**2 * p**gamma * (1.0 - p) ** (1.0 - 2.0 * xi) * abs(h) / K


def local_process_difference(model: ModelSpec, cfg: TwoStageConfig, h: float,
                             rng: np.random.Generator) -> float:
    """One draw of ``Z(h; d1) - Z(h; d0)`` for the change-point local process.

    Both processes reuse the same uniforms and errors; only the design
    centre differs (estimated ``d1`` versus the truth ``d0``).
    """
    n, n1, n2 = cfg.n, cfg.n1, cfg.n2
    stage1 = sample_batch(model, DesignSpec.uniform_global(), n1, n, rng)
    d1 = fit_changepoint_joint(stage1).d_hat
    u = rng.uniform(-1.0, 1.0, size=n2)
    eps = model.sigma * rng.standard_normal(n2)
    eta = 1.0 + cfg.gamma - 2.0 * model.xi
    d0 = model.d0
    hi, lo = (d0 + h * float(n) ** (-eta), d0) if h >= 0 else (d0, d0 + h * float(n) ** (-eta))
    mid = model.alpha_base + 0.5 * model.gap(n)
    halfwidth = cfg.K * float(n1) ** (-cfg.gamma)
    total = 0.0
    for centre, sign in ((d1, 1.0), (d0, -1.0)):
        x = centre + u * halfwidth
        inside = (x > lo) & (x <= hi)
        y = np.asarray(eval_mean(model, x[inside], n)) + eps[inside]
        # 1[X <= d0 + h n^-eta] - 1[X <= d0] is +1 on (d0, hi] (h > 0), -1 on (lo, d0] (h < 0)
        total += sign * np.sign(h) * float(np.sum(y - mid))
    return total / float(n2) ** model.xi


@dataclass
class Prop33Report:
    experiment_id: str
    h: float
    n_grid: list[int]
    variance: list[float]
    target: list[float]
    skewness: list[float]
    reps: int
    config: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        return [{"n": n, "variance": v, "pi0_sq": t, "skewness": s}
                for n, v, t, s in zip(self.n_grid, self.variance, self.target, self.skewness)]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _prop33_job(args) -> float:
    model, cfg, h, stream_id, rep = args
    return local_process_difference(model, cfg, h, derive_stream(cfg.seed, stream_id, rep))


def prop33_experiment(h: float, n_grid: Sequence[int], reps: int, model: ModelSpec,
                      cfg: TwoStageConfig, *, experiment_id: str = "prop33",
                      jobs: int = 1) -> Prop33Report:
    """Variance of the estimated-centre fluctuation against ``pi0^2``."""
    if model.kind != "changepoint":
        raise ValueError("prop33 needs a changepoint model")
    variance, target, skew = [], [], []
    for n in n_grid:
        c = cfg.replace(n=int(n))
        items = [(model, c, h, f"{experiment_id}/n={n}", r) for r in range(reps)]
        t = np.array(map_jobs(_prop33_job, items, jobs))
        v = float(np.var(t, ddof=1))
        variance.append(v)
        target.append(pi0_squared(model.sigma, c.n1 / c.n, c.gamma, model.xi, h, c.K))
        if v > 0:
            z = t - t.mean()
            skew.append(float(np.mean(z**3) / np.mean(z**2) ** 1.5))
        else:
            skew.append(0.0)
    return Prop33Report(experiment_id, h, [int(n) for n in n_grid], variance, target, skew, reps,
                        config={"model": model.to_dict(), "two_stage": cfg.to_dict()})


@dataclass
class AsymmetryReport:
    experiment_id: str
    n_grid: list[int]
    mean_d1: list[float]
    d_star: float
    d0: float
    reps: int
    config: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        return [{"n": n, "mean_d1": m, "d_star": self.d_star} for n, m in zip(self.n_grid, self.mean_d1)]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def asymmetry_target(d0: float, a1: float, a2: float, b: float) -> float:
    """Maximizer of the expected binned criterion for the two-sided exponential."""
    return d0 + (a1 - a2) * b / (a1 + a2)


def asymmetry_bias_experiment(a1: float, a2: float, b: float, n_grid: Sequence[int], reps: int,
                              *, d0: float = 0.5, sigma: float = 0.1, seed: int = 0,
                              experiment_id: str = "asymmetry", jobs: int = 1) -> AsymmetryReport:
    """Mean one-stage shorth estimate under the two-sided exponential signal."""
    if a1 <= 0 or a2 <= 0:
        raise ValueError("a1 and a2 must be positive")
    if not (d0 - b > 0 and d0 + b < 1):
        raise ValueError("[d0 - b, d0 + b] must lie inside (0, 1)")
    model = ModelSpec.unimodal(d0=d0, sigma=sigma, asym=(a1, a2))
    means = []
    for n in n_grid:
        cfg = TwoStageConfig(problem="mode", n=int(n), b=b, seed=seed, K=2 * b)
        recs = replicate(model, cfg, f"{experiment_id}/n={n}", reps, one_stage=True, jobs=jobs)
        means.append(float(np.mean([r.d1_hat for r in recs])))
    return AsymmetryReport(experiment_id, [int(n) for n in n_grid], means,
                           asymmetry_target(d0, a1, a2, b), d0, reps,
                           config={"a1": a1, "a2": a2, "b": b, "sigma": sigma, "seed": seed})


@dataclass
class ScaleCheckReport:
    """Second-stage spread against ``p**(-1/3)`` times the stage-one limit."""

    experiment_id: str
    n: int
    reps: int
    scale_estimate: float
    scale_target: float
    relative_error: float
    correlation: float  # corr(d1 - d0, d2 - d0); near -1 is the reflection effect
    config: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def symmetric_scale_check(model: ModelSpec, cfg: TwoStageConfig, n: int, reps: int,
                          oracle_draws: int = 4000, *, experiment_id: str = "scale-check",
                          jobs: int = 1) -> ScaleCheckReport:
    """Compare ``sd(n**(1/3) (d2 - d0))`` with ``p**(-1/3) sd(Z)``.

    ``Z`` is the stage-one limit of ``n1**(1/3) (d1 - d0)``, drawn from the
    simulated argmax law and scaled by ``(a/c)**(2/3)``. The estimate is the
    square root of the variance ratio.
    """
    if cfg.problem != "mode" or cfg.second_stage_design != "symmetric":
        raise ValueError("scale check applies to the mode problem with a symmetric zoom")
    c = cfg.replace(n=n)
    p = c.n1 / c.n
    recs = replicate(model, c, f"{experiment_id}/n={n}", reps, jobs=jobs)
    e2 = np.array([r.d2_hat - model.d0 for r in recs])
    e1 = np.array([r.d1_hat - model.d0 for r in recs])
    z = limit_sample("mode", oracle_draws, c.seed, experiment_id) * stage_one_scale(
        model, "mode", p, c.b)
    est = math.sqrt(np.var(e2 * float(n) ** (1.0 / 3.0), ddof=1) / np.var(z, ddof=1))
    target = p ** (-1.0 / 3.0)
    return ScaleCheckReport(experiment_id, n, reps, est, target, est / target - 1.0,
                            float(np.corrcoef(e1, e2)[0, 1]),
                            config={"model": model.to_dict(), "two_stage": c.to_dict(),
                                    "oracle_draws": oracle_draws})
