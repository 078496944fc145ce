import math

import mpmath
import numpy as np
import pytest
from scipy import stats

import recurlab as rl
from recurlab.errors import DomainError, UnsupportedDensityError
from recurlab.maps import eval_map_batch, sample_invariant_batch
from recurlab._rng import philox_key, sample_generator

GOLDEN = rl.GOLDEN
RHO1 = GOLDEN**3 / (GOLDEN**2 + 1)
RHO2 = GOLDEN**2 / (GOLDEN**2 + 1)


def test_eval_map_doubling(doubling):
    assert rl.eval_map(doubling, 0.3) == pytest.approx(0.6, abs=1e-15)


def test_eval_map_cusp_exact_root(cusp):
    assert rl.eval_map(cusp, 0.25) == 0.0


def test_eval_map_beta_golden_identity_200bits(beta_golden):
    # beta*(beta-1) = beta^2 - beta = 1, which lands on the mod-1 boundary:
    # the image must be within 2^-190 of {0, 1} at 200-bit precision
    with mpmath.workprec(200):
        b = (1 + mpmath.sqrt(5)) / 2
        y = rl.eval_map(beta_golden, b - 1)
        d = min(abs(y), abs(1 - y))
        assert d < mpmath.mpf(2) ** -190


def test_eval_map_domain_error(doubling):
    with pytest.raises(DomainError):
        rl.eval_map(doubling, 1.5)


def test_eval_map_mod_one_range(beta_golden):
    for x in np.linspace(0, 1, 37):
        y = rl.eval_map(beta_golden, float(x))
        assert 0.0 <= y < 1.0 or y == 0.0


def test_eval_density_doubling(doubling):
    for x in (0.0, 0.3, 0.99):
        assert rl.eval_density(doubling, x) == 1.0


def test_eval_density_beta_values(beta_golden):
    assert rl.eval_density(beta_golden, 0.5) == pytest.approx(1.17082039, abs=1e-8)
    assert rl.eval_density(beta_golden, 0.9) == pytest.approx(RHO2, abs=1e-12)


def test_eval_density_cusp_endpoints(cusp):
    assert rl.eval_density(cusp, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert rl.eval_density(cusp, 1.0) == 0.0
    assert 1.0 in cusp.density.zero_set


def test_eval_density_unknown_directs_to_ulam(mp_quarter):
    with pytest.raises(UnsupportedDensityError, match="ulam"):
        rl.eval_density(mp_quarter, 0.5)


def test_density_jump_convention_beta(beta_golden):
    cut = 1.0 / GOLDEN
    d = beta_golden.density
    assert d(cut) == pytest.approx(RHO2, abs=1e-12)          # right limit
    assert d.left_limit(cut) == pytest.approx(RHO1, abs=1e-12)
    assert d.jump_value(cut) == pytest.approx(RHO1 - RHO2, abs=1e-12)
    assert d.jump_points == (cut,)


def test_beta_golden_exact_normalization():
    # rho1/beta + rho2*(1 - 1/beta) = 1 exactly for the golden parameter
    val = RHO1 / GOLDEN + RHO2 * (1 - 1 / GOLDEN)
    assert abs(val - 1.0) < 1e-12


@pytest.mark.parametrize("kind", ["doubling", "beta", "gauss", "cusp", "logistic"])
def test_density_normalization(kind):
    m = rl.make_map(kind)
    assert abs(m.density.integral() - 1.0) < 1e-10


def test_sample_invariant_doubling_identity(doubling, fixed_uniform):
    assert rl.sample_invariant(doubling, fixed_uniform(0.42)) == pytest.approx(0.42)


def test_sample_invariant_cusp_quantile(cusp, fixed_uniform):
    # F(x) = (-x^2/2 + x + 3/2)/2 gives F(0) = 3/4, so u = 0.75 -> x = 0
    assert rl.sample_invariant(cusp, fixed_uniform(0.75)) == pytest.approx(0.0, abs=1e-15)


def test_sample_invariant_mp_burn_in_lands_inside(mp_quarter, fixed_uniform):
    x = rl.sample_invariant(mp_quarter, fixed_uniform(0.42), burn_in=500)
    assert 0.0 < x < 1.0


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["doubling", "beta", "gauss", "cusp", "logistic"])
def test_pushforward_invariance_ks(kind):
    # one map step applied to 1e6 invariant samples must keep the law
    m = rl.make_map(kind)
    gen = sample_generator(philox_key(2026, 50), 0)
    xs = sample_invariant_batch(m, gen, 10**6)
    pushed = eval_map_batch(m, xs)
    res = stats.kstest(pushed, lambda q: rl.invariant_cdf(m, q))
    assert res.pvalue > 1e-3, f"{kind}: KS p={res.pvalue}"


def test_map_catalog_rejects_unknown():
    with pytest.raises(ValueError):
        rl.make_map("tentmap")


def test_mp_gamma_validation():
    with pytest.raises(ValueError):
        rl.make_map("mp", gamma=1.5)
