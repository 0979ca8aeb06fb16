"""Default models and two-stage settings for each problem.

The values are calibrated so that the asymptotic statements are visible on
the default grid ``n = 2**10 ... 2**15`` at a few hundred replications.
"""

from __future__ import annotations

from .model_zoo import CurveSpec, ModelSpec
from .two_stage import TwoStageConfig

CUSP_PROFILE = CurveSpec("exp_cusp", {"height": 1.0, "rate": 5.0})
SMOOTH_PROFILE = CurveSpec("quadratic_cap", {"height": 1.0, "curvature": 10.0})


def default_model(problem: str) -> ModelSpec:
    if problem == "changepoint":
        return ModelSpec.changepoint(d0=0.5, sigma=0.2, c0=1.0, xi=0.25)
    if problem == "inverse_isotonic":
        return ModelSpec.monotone(CurveSpec("linear", {"intercept": 0.0, "slope": 1.0}),
                                  t0=0.5, sigma=0.1)
    if problem == "classification":
        return ModelSpec.binary_monotone(
            CurveSpec("logistic", {"low": 0.0, "high": 1.0, "rate": 16.0, "center": 0.5}))
    if problem == "mode":
        return ModelSpec.unimodal(CUSP_PROFILE, d0=0.5, sigma=0.1)
    raise ValueError(f"unknown problem {problem!r}")


def default_config(problem: str) -> TwoStageConfig:
    if problem == "changepoint":
        return TwoStageConfig(problem, p=1.0 / 3.0, gamma=0.3, K=2.0)
    if problem == "inverse_isotonic":
        return TwoStageConfig(problem, p=0.25, gamma=0.2, K=1.0)
    if problem == "classification":
        return TwoStageConfig(problem, p=0.25, gamma=0.25, K=1.0)
    if problem == "mode":
        return TwoStageConfig(problem, p=0.25, gamma=0.2, K=0.5, b=0.1)
    raise ValueError(f"unknown problem {problem!r}")


def smooth_mode(design: str = "uniform") -> tuple[ModelSpec, TwoStageConfig]:
    """Smooth-peak mode problem with a uniform or triangular second stage."""
    model = ModelSpec.unimodal(SMOOTH_PROFILE, d0=0.5, sigma=0.1)
    cfg = TwoStageConfig("mode", p=0.25, gamma=0.25, K=0.5, b=0.1, second_stage_design=design)
    return model, cfg
