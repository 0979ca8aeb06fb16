import math

import numpy as np
import pytest
from scipy import integrate, stats

from multistage import limit_laws as ll
from multistage.streams import derive_stream

COARSE = {"abs": ll.PathGrid(0.005, 16.0), "quadratic": ll.PathGrid(0.005, 8.0)}


def ks_critical(m, k=None, c=1.63):
    k = m if k is None else k
    return c * math.sqrt((m + k) / (m * k))


def test_grid_validation():
    with pytest.raises(ValueError):
        ll.PathGrid(0.3, 1.0)
    with pytest.raises(ValueError):
        ll.PathGrid(0.1, 0.5)
    assert ll.PathGrid(0.5, 8.0).points[[0, -1]].tolist() == [-8.0, 8.0]


def test_paths_start_at_zero_with_brownian_increments():
    grid = ll.PathGrid(0.01, 1.0)
    paths = ll.two_sided_paths(grid, 4000, np.random.default_rng(0), diffusion=2.0)
    mid = grid.half_count
    assert np.all(paths[:, mid] == 0.0)
    assert np.var(paths[:, -1]) == pytest.approx(4.0, rel=0.08)  # a^2 * t at t = 1
    assert np.var(paths[:, 0]) == pytest.approx(4.0, rel=0.08)
    assert abs(np.corrcoef(paths[:, 0], paths[:, -1])[0, 1]) < 0.05


def test_abs_law_closed_form_is_a_density():
    assert 2 * integrate.quad(ll.abs_law_pdf, 0, np.inf, limit=200)[0] == pytest.approx(1.0)
    assert ll.abs_law_pdf(0.0) == pytest.approx(2.0)
    q = ll.abs_law_abs_quantile(0.9)
    assert ll.abs_law_tail(q) == pytest.approx(0.1)


def test_simulated_abs_law_matches_closed_form():
    sample = ll.argext_batch(ll.DriftSpec("abs"), ll.DEFAULT_GRIDS["abs"], 3000,
                             derive_stream(0, "abs-law", 0))

    def cdf(v):
        v = np.atleast_1d(v)
        t = np.array([ll.abs_law_tail(abs(x)) for x in v])
        return np.where(v >= 0, 1 - t / 2, t / 2)

    assert stats.kstest(sample, cdf).pvalue > 0.001
    var = 2 * integrate.quad(lambda v: v * v * ll.abs_law_pdf(v), 0, np.inf, limit=200)[0]
    assert np.var(sample) == pytest.approx(var, rel=0.12)


def test_chernoff_variance():
    sample = ll.argext_batch(ll.DriftSpec("quadratic"), ll.DEFAULT_GRIDS["quadratic"], 4000,
                             derive_stream(0, "chernoff", 0))
    assert np.var(sample) == pytest.approx(0.2636, abs=0.02)
    assert abs(np.mean(sample)) < 0.03


@pytest.mark.parametrize("family,a,c", [("abs", 1.0, 2.0), ("quadratic", 2.0, 1.0),
                                        ("quadratic", 1.0, 3.0)])
def test_brownian_rescaling(family, a, c):
    drift = ll.DriftSpec(family, c, "min", a)
    scaled = ll.argext_batch(drift, COARSE[family], 2000, np.random.default_rng(1))
    unit = ll.argext_batch(ll.DriftSpec(family), COARSE[family], 2000, np.random.default_rng(2))
    assert ll.ks_two_sample(scaled, drift.rescale * unit) < ks_critical(2000)


def test_argmax_is_mirror_of_argmin():
    rng1, rng2 = np.random.default_rng(3), np.random.default_rng(3)
    g = COARSE["quadratic"]
    mx = ll.argext_batch(ll.DriftSpec("quadratic", sign="max"), g, 200, rng1)
    mn = ll.argext_batch(ll.DriftSpec("quadratic", sign="min"), g, 200, rng2)
    # argmax(B - h^2) = argmin(-B + h^2) and -B is again Brownian: same law, not same draws
    assert ll.ks_two_sample(mx, mn) < ks_critical(200)


def test_truncation_is_monitored():
    with pytest.raises(ll.TruncationError):
        ll.argext_batch(ll.DriftSpec("abs"), ll.PathGrid(0.01, 0.5), 500,
                        np.random.default_rng(0))


def test_normalized_laws():
    assert ll.normalized_law("changepoint").family == "abs"
    assert ll.normalized_law("mode").sign == "max"
    assert ll.normalized_law("classification").family == "quadratic"


def test_constants():
    assert ll.changepoint_scale(1.0, 1.0, 1.0, 0.5, 0.0) == pytest.approx(16.0)
    assert ll.changepoint_scale(1.0, 1.0, 1.0, 0.5, 0.0, psi0=1.0) == pytest.approx(8.0)
    assert ll.isotonic_scale(1.0, 0.5, 1.0, 0.5, 0.0) == pytest.approx(4.0 ** (1 / 3))
    assert ll.isotonic_scale(1.0, 9.0, 1.0, 0.5, 0.0, r_d0=0.5) == pytest.approx(4.0 ** (1 / 3))
    with pytest.raises(ll.DegenerateLimit, match="flat curve"):
        ll.isotonic_scale(1.0, 0.1, 0.0, 0.5, 0.2)
    s = ll.mode_scales(1.0, 0.1, 1.0, 0.5, -2.0, -1.0, 0.0, 0.5, 0.0)
    assert (s.a, s.c) == (pytest.approx(math.sqrt(0.5)), 1.0)
    assert s.one_stage == pytest.approx(0.5 ** (1 / 3))
    assert s.two_stage_constant == pytest.approx(2.0 ** (1 / 3))
    with pytest.raises(ll.DegenerateLimit, match="cusp required"):
        ll.mode_scales(1.0, 0.1, 1.0, 0.5, 0.0, -1.0, 0.1, 0.5, 0.2)


def test_optimal_p():
    assert ll.optimal_p("changepoint", 0.0) == 0.5
    assert ll.optimal_p("changepoint", 0.25) == pytest.approx(1 / 3)
    for problem in ("inverse_isotonic", "classification", "mode"):
        assert ll.optimal_p(problem) == 0.25


def test_ks_matches_scipy():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a = np.round(rng.normal(size=int(rng.integers(5, 300))), 1)
        b = np.round(rng.normal(0.2, 1.2, size=int(rng.integers(5, 300))), 1)
        assert ll.ks_two_sample(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)


def test_same_law_ks_below_critical_value():
    drift, grid = ll.DriftSpec("quadratic"), ll.PathGrid(0.01, 8.0)
    crit = ks_critical(1000)
    below = 0
    for rep in range(100):
        a = ll.argext_batch(drift, grid, 1000, derive_stream(rep, "same-law", 0))
        b = ll.argext_batch(drift, grid, 1000, derive_stream(rep, "same-law", 1))
        below += ll.ks_two_sample(a, b) < crit
    assert below >= 99


def test_empirical_quantile():
    assert ll.empirical_quantile([0.0, 1.0, 2.0, 3.0], 0.5) == 1.5
    with pytest.raises(ValueError):
        ll.empirical_quantile([], 0.5)
