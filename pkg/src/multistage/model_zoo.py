"""Generative models, sampling designs and exact risk functionals.

Four regression problems share one :class:`ModelSpec`:

  - ``changepoint``: two-level step with a jump that shrinks with the budget
  - ``monotone``: nondecreasing curve, inverse sought at a level ``t0``
  - ``binary_monotone``: Bernoulli responses with a monotone success curve
  - ``unimodal``: symmetric peak ``m(x) = profile(|x - d0|)``

Designs describe where covariates are drawn: uniform on an interval, uniform
on a zoomed window, or a symmetric density rescaled onto a zoomed window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Any, Literal

import numpy as np
from scipy import integrate

Kind = Literal["changepoint", "monotone", "binary_monotone", "unimodal"]
KINDS: tuple[str, ...] = ("changepoint", "monotone", "binary_monotone", "unimodal")
NOISES: tuple[str, ...] = ("gaussian", "uniform")


class SpecError(ValueError):
    """A model, curve or design description is malformed."""


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    if not isinstance(data, dict):
        raise SpecError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise SpecError(f"{where}.{unknown[0]}: unknown field")


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------
# family -> (parameter names, defaults)
CURVE_FAMILIES: dict[str, dict[str, float]] = {
    # r(x) = intercept + slope * x
    "linear": {"intercept": 0.0, "slope": 1.0},
    # r(x) = low + (high - low) / (1 + exp(-rate * (x - center)))
    "logistic": {"low": 0.0, "high": 1.0, "rate": 10.0, "center": 0.5},
    # profile(t) = height * exp(-rate * t); cusp at t = 0
    "exp_cusp": {"height": 1.0, "rate": 1.0},
    # profile(t) = height * (1 - curvature * t^2); flat at t = 0
    "quadratic_cap": {"height": 1.0, "curvature": 1.0},
}


@dataclass(frozen=True)
class CurveSpec:
    """A named parametric curve with closed-form value, derivative and inverse.

    Monotone families (``linear``, ``logistic``) act on ``x``; unimodal
    profiles (``exp_cusp``, ``quadratic_cap``) act on the distance ``t >= 0``
    from the mode.
    """

    family: str
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in CURVE_FAMILIES:
            raise SpecError(f"curve.family: unknown family {self.family!r}")
        defaults = CURVE_FAMILIES[self.family]
        unknown = sorted(set(self.params) - set(defaults))
        if unknown:
            raise SpecError(f"curve.params.{unknown[0]}: unknown field")
        merged = {**defaults, **{k: float(v) for k, v in self.params.items()}}
        object.__setattr__(self, "params", merged)
        if self.family == "logistic" and merged["rate"] <= 0:
            raise SpecError("curve.params.rate: must be positive")
        if self.family == "exp_cusp" and merged["rate"] <= 0:
            raise SpecError("curve.params.rate: must be positive")

    @property
    def is_profile(self) -> bool:
        return self.family in ("exp_cusp", "quadratic_cap")

    def value(self, x):
        p = self.params
        x = np.asarray(x, dtype=float)
        if self.family == "linear":
            out = p["intercept"] + p["slope"] * x
        elif self.family == "logistic":
            out = p["low"] + (p["high"] - p["low"]) * _expit(p["rate"] * (x - p["center"]))
        elif self.family == "exp_cusp":
            out = p["height"] * np.exp(-p["rate"] * x)
        else:
            out = p["height"] * (1.0 - p["curvature"] * x * x)
        return out if out.ndim else float(out)

    def derivative(self, x):
        p = self.params
        x = np.asarray(x, dtype=float)
        if self.family == "linear":
            out = np.full_like(x, p["slope"])
        elif self.family == "logistic":
            s = _expit(p["rate"] * (x - p["center"]))
            out = (p["high"] - p["low"]) * p["rate"] * s * (1.0 - s)
        elif self.family == "exp_cusp":
            out = -p["rate"] * p["height"] * np.exp(-p["rate"] * x)
        else:
            out = -2.0 * p["height"] * p["curvature"] * x
        return out if out.ndim else float(out)

    def inverse(self, level: float) -> float:
        """Solve ``value(x) = level`` for the monotone families."""
        p = self.params
        if self.family == "linear":
            if p["slope"] == 0:
                raise SpecError("linear curve with zero slope has no inverse")
            return (level - p["intercept"]) / p["slope"]
        if self.family == "logistic":
            u = (level - p["low"]) / (p["high"] - p["low"])
            if not 0.0 < u < 1.0:
                raise SpecError(f"level {level} outside the logistic range")
            return p["center"] + math.log(u / (1.0 - u)) / p["rate"]
        raise SpecError(f"{self.family} is a unimodal profile, not invertible")

    def antiderivative(self, x: float) -> float | None:
        """Closed-form primitive of ``value`` (``None`` when unavailable)."""
        p = self.params
        if self.family == "linear":
            return p["intercept"] * x + 0.5 * p["slope"] * x * x
        if self.family == "logistic":
            z = p["rate"] * (x - p["center"])
            softplus = max(z, 0.0) + math.log1p(math.exp(-abs(z)))
            return p["low"] * x + (p["high"] - p["low"]) * softplus / p["rate"]
        return None

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict, where: str = "curve") -> "CurveSpec":
        _check_keys(data, {"family", "params"}, where)
        if "family" not in data:
            raise SpecError(f"{where}.family: required")
        params = data.get("params", {})
        _check_keys(params, set(CURVE_FAMILIES.get(data["family"], {})), f"{where}.params")
        try:
            return cls(data["family"], dict(params))
        except SpecError as exc:
            msg = str(exc)
            raise SpecError(where + msg[len("curve"):] if msg.startswith("curve") else
                            f"{where}: {msg}") from None
        except TypeError as exc:
            raise SpecError(f"{where}: {exc}") from None


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ModelSpec:
    """One of the four generative models.

    ``changepoint`` uses ``alpha_base``, ``c0`` and ``xi``: the mean is
    ``alpha_base`` left of ``d0`` and ``alpha_base + c0 * n**(-xi)`` right of
    it, where ``n`` is the total budget. ``monotone`` and ``binary_monotone``
    use ``curve`` and ``t0`` with ``d0 = curve.inverse(t0)``. ``unimodal``
    uses ``curve`` as the radial profile, or the two-sided exponential
    ``exp(-a1 |x - d0|)`` / ``exp(-a2 |x - d0|)`` when ``asym`` is given.
    """

    kind: str
    d0: float
    sigma: float = 0.0
    alpha_base: float = 0.0
    c0: float = 1.0
    xi: float = 0.0
    curve: CurveSpec | None = None
    t0: float = 0.5
    asym: tuple[float, float] | None = None
    noise: str = "gaussian"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SpecError(f"kind: unknown model kind {self.kind!r}")
        if not 0.0 < self.d0 < 1.0:
            raise SpecError("d0: must lie in (0, 1)")
        if self.sigma < 0:
            raise SpecError("sigma: must be nonnegative")
        if self.noise not in NOISES:
            raise SpecError(f"noise: unknown noise {self.noise!r}")
        if self.kind == "changepoint":
            if self.c0 <= 0:
                raise SpecError("c0: must be positive")
            if not 0.0 <= self.xi < 0.5:
                raise SpecError("xi: must lie in [0, 1/2)")
        elif self.kind in ("monotone", "binary_monotone"):
            if self.curve is None or self.curve.is_profile:
                raise SpecError("curve: a monotone family is required")
            if self.kind == "binary_monotone" and self.t0 != 0.5:
                raise SpecError("t0: binary_monotone fixes t0 = 1/2")
            if self.curve.params.get("slope", 1.0) != 0.0:
                implied = self.curve.inverse(self.t0)
                if abs(implied - self.d0) > 1e-9:
                    raise SpecError(
                        f"d0: curve crosses t0={self.t0} at {implied!r}, not at {self.d0!r}"
                    )
        else:
            if self.asym is not None:
                a1, a2 = self.asym
                if a1 <= 0 or a2 <= 0:
                    raise SpecError("asym: both rates must be positive")
                object.__setattr__(self, "asym", (float(a1), float(a2)))
            elif self.curve is None or not self.curve.is_profile:
                raise SpecError("curve: a unimodal profile family is required")

    # constructors for the common cases -----------------------------------
    @classmethod
    def changepoint(cls, d0=0.5, sigma=0.2, alpha_base=0.0, c0=1.0, xi=0.25, **kw):
        return cls("changepoint", d0, sigma=sigma, alpha_base=alpha_base, c0=c0, xi=xi, **kw)

    @classmethod
    def monotone(cls, curve: CurveSpec, t0: float = 0.5, sigma: float = 0.1, **kw):
        return cls("monotone", curve.inverse(t0), sigma=sigma, curve=curve, t0=t0, **kw)

    @classmethod
    def binary_monotone(cls, curve: CurveSpec, **kw):
        return cls("binary_monotone", curve.inverse(0.5), curve=curve, t0=0.5, **kw)

    @classmethod
    def unimodal(cls, curve: CurveSpec | None = None, d0=0.5, sigma=0.1, asym=None, **kw):
        return cls("unimodal", d0, sigma=sigma, curve=curve, asym=asym, **kw)

    def gap(self, n_budget: int) -> float:
        """Jump size ``c0 * n**(-xi)`` of the change-point mean."""
        return self.c0 * float(n_budget) ** (-self.xi)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, CurveSpec):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict, where: str = "model") -> "ModelSpec":
        names = {f.name for f in fields(cls)}
        _check_keys(data, names, where)
        kw = dict(data)
        for req in ("kind", "d0"):
            if req not in kw:
                raise SpecError(f"{where}.{req}: required")
        if kw.get("curve") is not None:
            kw["curve"] = CurveSpec.from_dict(kw["curve"], f"{where}.curve")
        if kw.get("asym") is not None:
            kw["asym"] = tuple(kw["asym"])
        try:
            return cls(**kw)
        except SpecError as exc:
            raise SpecError(f"{where}.{exc}") from None
        except TypeError as exc:
            raise SpecError(f"{where}: {exc}") from None


def eval_mean(model: ModelSpec, x, n_budget: int = 1):
    """Noiseless regression mean at ``x`` for total budget ``n_budget``."""
    xa = np.asarray(x, dtype=float)
    if model.kind == "changepoint":
        out = np.where(xa <= model.d0, model.alpha_base, model.alpha_base + model.gap(n_budget))
    elif model.kind in ("monotone", "binary_monotone"):
        out = np.asarray(model.curve.value(xa))
    elif model.asym is not None:
        a1, a2 = model.asym
        dist = np.abs(xa - model.d0)
        out = np.where(xa <= model.d0, np.exp(-a1 * dist), np.exp(-a2 * dist))
    else:
        out = np.asarray(model.curve.value(np.abs(xa - model.d0)))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Designs
# ---------------------------------------------------------------------------
SYMMETRIC_DENSITIES = ("triangular", "truncexp", "uniform")


@dataclass(frozen=True)
class SymmetricDensity:
    """Symmetric density on [-1, 1] with closed-form value, CDF and quantile.

    ``truncexp`` is ``C exp(-rate |w|)``; ``triangular`` is ``1 - |w|``.
    """

    name: str = "triangular"
    rate: float = 1.0

    def __post_init__(self) -> None:
        if self.name not in SYMMETRIC_DENSITIES:
            raise SpecError(f"density.name: unknown density {self.name!r}")
        if self.name == "truncexp" and self.rate <= 0:
            raise SpecError("density.rate: must be positive")

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        inside = np.abs(w) <= 1.0
        if self.name == "triangular":
            val = 1.0 - np.abs(w)
        elif self.name == "uniform":
            val = np.full_like(w, 0.5)
        else:
            lam = self.rate
            val = lam * np.exp(-lam * np.abs(w)) / (2.0 * -math.expm1(-lam))
        return np.where(inside, val, 0.0)

    def cdf(self, w):
        w = np.clip(np.asarray(w, dtype=float), -1.0, 1.0)
        a = np.abs(w)
        if self.name == "triangular":
            half = a - 0.5 * a * a
        elif self.name == "uniform":
            half = 0.5 * a
        else:
            lam = self.rate
            half = 0.5 * np.expm1(-lam * a) / np.expm1(-lam)
        return 0.5 + np.sign(w) * half

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        s = np.sign(u - 0.5)
        h = np.abs(u - 0.5)  # mass between 0 and |w|
        if self.name == "triangular":
            a = 1.0 - np.sqrt(np.clip(1.0 - 2.0 * h, 0.0, None))
        elif self.name == "uniform":
            a = 2.0 * h
        else:
            lam = self.rate
            a = -np.log1p(2.0 * h * np.expm1(-lam)) / lam
        return s * a

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "rate": self.rate}


@dataclass(frozen=True)
class DesignSpec:
    """Covariate design.

    ``uniform_global``: uniform on ``[a, b]``. ``uniform_zoom``: uniform on
    ``[center - halfwidth, center + halfwidth]``. ``symmetric_zoom``:
    ``center + W * halfwidth`` with ``W`` drawn from ``density``. Supports
    are intersected with [0, 1]; :attr:`clipped` reports whether that cut
    anything off.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    center: float = 0.5
    halfwidth: float = 0.5
    density: SymmetricDensity | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform_global", "uniform_zoom", "symmetric_zoom"):
            raise SpecError(f"design.kind: unknown design {self.kind!r}")
        if self.kind == "symmetric_zoom" and self.density is None:
            object.__setattr__(self, "density", SymmetricDensity())

    @classmethod
    def uniform_global(cls, a: float = 0.0, b: float = 1.0) -> "DesignSpec":
        return cls("uniform_global", a=a, b=b)

    @classmethod
    def uniform_zoom(cls, center: float, halfwidth: float) -> "DesignSpec":
        return cls("uniform_zoom", center=center, halfwidth=halfwidth)

    @classmethod
    def symmetric_zoom(cls, center: float, halfwidth: float, density=None) -> "DesignSpec":
        return cls("symmetric_zoom", center=center, halfwidth=halfwidth,
                   density=density or SymmetricDensity())

    @property
    def nominal(self) -> tuple[float, float]:
        if self.kind == "uniform_global":
            return (self.a, self.b)
        return (self.center - self.halfwidth, self.center + self.halfwidth)

    @property
    def support(self) -> tuple[float, float]:
        lo, hi = self.nominal
        return (max(lo, 0.0), min(hi, 1.0))

    @property
    def clipped(self) -> bool:
        return self.support != self.nominal

    def pdf(self, x):
        """Density of the (clipped, renormalized) design at ``x``."""
        lo, hi = self.support
        x = np.asarray(x, dtype=float)
        inside = (x >= lo) & (x <= hi)
        if self.kind != "symmetric_zoom":
            return np.where(inside, 1.0 / (hi - lo), 0.0)
        g = self.density
        w = (x - self.center) / self.halfwidth
        mass = g.cdf((hi - self.center) / self.halfwidth) - g.cdf((lo - self.center) / self.halfwidth)
        return np.where(inside, g.pdf(w) / (self.halfwidth * mass), 0.0)

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = self.support
        if not hi > lo:
            raise ValueError("empty design support")
        if self.kind != "symmetric_zoom":
            return rng.uniform(lo, hi, size=count)
        g = self.density
        u_lo = float(g.cdf((lo - self.center) / self.halfwidth))
        u_hi = float(g.cdf((hi - self.center) / self.halfwidth))
        w = g.ppf(rng.uniform(u_lo, u_hi, size=count))
        return np.clip(self.center + w * self.halfwidth, lo, hi)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "uniform_global":
            out.update(a=self.a, b=self.b)
        else:
            out.update(center=self.center, halfwidth=self.halfwidth)
        if self.kind == "symmetric_zoom":
            out["density"] = self.density.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict, where: str = "design") -> "DesignSpec":
        _check_keys(data, {"kind", "a", "b", "center", "halfwidth", "density"}, where)
        kw = dict(data)
        if "kind" not in kw:
            raise SpecError(f"{where}.kind: required")
        try:
            if kw.get("density") is not None:
                _check_keys(kw["density"], {"name", "rate"}, f"{where}.density")
                kw["density"] = SymmetricDensity(**kw["density"])
            return cls(**kw)
        except SpecError:
            raise
        except (TypeError, ValueError) as exc:
            raise SpecError(f"{where}: {exc}") from None


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------
@dataclass
class SampleBatch:
    """Covariate/response pairs in generation order."""

    x: np.ndarray
    y: np.ndarray
    stage: int
    design: DesignSpec
    n_budget: int

    def __post_init__(self) -> None:
        if len(self.x) != len(self.y):
            raise ValueError("x and y must have equal length")

    def __len__(self) -> int:
        return len(self.x)


def draw_noise(model: ModelSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    if model.noise == "gaussian":
        return model.sigma * rng.standard_normal(count)
    # uniform on [-sqrt(3), sqrt(3)] has unit variance
    return model.sigma * rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=count)


def sample_batch(model: ModelSpec, design: DesignSpec, count: int, n_budget: int,
                 rng: np.random.Generator, stage: int = 1) -> SampleBatch:
    """Draw ``count`` points from ``design`` and responses from ``model``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    x = design.draw(rng, count)
    mean = np.asarray(eval_mean(model, x, n_budget), dtype=float)
    if model.kind == "binary_monotone":
        y = (rng.random(count) < mean).astype(float)
    else:
        y = mean + draw_noise(model, rng, count)
    return SampleBatch(x, y, stage, design, n_budget)


def second_stage_interval(d1_hat: float, K: float, gamma: float, n1: int,
                          shrink_by_b: float | None = None) -> tuple[tuple[float, float], bool]:
    """Zoomed interval ``d1_hat +/- K n1**(-gamma)`` clipped to [0, 1].

    With ``shrink_by_b`` the halfwidth is ``(K - b) n1**(-gamma)``, the
    search domain of the mode problem. Returns ``((lo, hi), clipped)``.
    """
    if K <= 0 or gamma <= 0 or n1 < 1:
        raise ValueError("need K > 0, gamma > 0 and n1 >= 1")
    scale = K
    if shrink_by_b is not None:
        if K <= shrink_by_b:
            raise ValueError("bin exceeds halfwidth")
        scale = K - shrink_by_b
    h = scale * float(n1) ** (-gamma)
    lo, hi = d1_hat - h, d1_hat + h
    clo, chi = max(lo, 0.0), min(hi, 1.0)
    return (clo, chi), (clo, chi) != (lo, hi)


# ---------------------------------------------------------------------------
# Risk
# ---------------------------------------------------------------------------
def risk_uniform(curve: CurveSpec, threshold: float) -> float:
    """Misclassification risk of ``x -> 1[x >= threshold]`` on Uniform[0, 1].

    Uses ``R = int_0^1 (1 - r) + int_0^a (2 r - 1)``.
    """
    a = float(threshold)
    F0, F1, Fa = (curve.antiderivative(t) for t in (0.0, 1.0, a))
    if F0 is not None:
        return (1.0 - (F1 - F0)) + (2.0 * (Fa - F0) - a)
    r = curve.value
    left, _ = integrate.quad(lambda t: 1.0 - r(t), 0.0, 1.0, epsabs=1e-10)
    right, _ = integrate.quad(lambda t: 2.0 * r(t) - 1.0, 0.0, a, epsabs=1e-10)
    return left + right


def excess_risk(curve: CurveSpec, threshold, d0: float) -> np.ndarray:
    """``R(threshold) - R(d0)`` as ``int_d0^a (2 r - 1)``, vectorized."""
    a = np.atleast_1d(np.asarray(threshold, dtype=float))
    F = curve.antiderivative
    if F(0.0) is not None:
        out = np.array([2.0 * (F(t) - F(d0)) - (t - d0) for t in a])
    else:
        out = np.array([integrate.quad(lambda s: 2.0 * curve.value(s) - 1.0, d0, t,
                                       epsabs=1e-12)[0] for t in a])
    return out
