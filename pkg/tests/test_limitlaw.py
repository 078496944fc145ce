import math

import pytest

import recurlab as rl
from recurlab.errors import UnsupportedDensityError
from recurlab.limitlaw import (
    QuadratureConfig,
    closed_form_pmf,
    cusp_pmf_gamma_identity,
    log_pmf,
)
from recurlab.ulam import ulam_density

GOLDEN = rl.GOLDEN
RHO2 = GOLDEN**2 / (GOLDEN**2 + 1)

TAU_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def test_pmf_doubling_basic(doubling):
    v = rl.poisson_like_pmf(doubling.density, 1.0, 0)
    assert v.value == pytest.approx(math.exp(-1.0), abs=1e-10)
    assert not v.flagged


def test_pmf_tau_zero_is_normalization(doubling, cusp, beta_golden):
    for m in (doubling, cusp, beta_golden):
        assert rl.poisson_like_pmf(m.density, 0.0, 0).value == pytest.approx(1.0, abs=1e-10)
        assert rl.poisson_like_pmf(m.density, 0.0, 3).value == 0.0


def test_pmf_cusp_value(cusp):
    # 2/tau^2 - 2 e^-tau (1/tau + 1/tau^2) at tau = 2
    v = rl.poisson_like_pmf(cusp.density, 2.0, 0)
    assert v.value == pytest.approx(0.29699707514508095, abs=1e-9)


def test_closed_form_doubling():
    assert closed_form_pmf("doubling", 2.0, 3) == pytest.approx(0.18044704, abs=1e-8)


def test_closed_form_cusp_and_gamma_identity():
    assert closed_form_pmf("cusp", 1.0, 1) == pytest.approx(0.32120559, abs=1e-8)
    for tau in (0.5, 1.0, 2.0, 4.0, 8.0, 20.0):
        for k in range(9):
            assert closed_form_pmf("cusp", tau, k) == pytest.approx(
                cusp_pmf_gamma_identity(tau, k), abs=1e-10)


def test_closed_form_beta_frozen_value():
    # frozen from the quadrature of the averaged-Poisson integrand: the
    # mu-weighted two-piece value (0.358450...), which the Monte Carlo also
    # converges to
    assert closed_form_pmf("beta", 1.0, 0) == pytest.approx(0.3584501053, abs=1e-9)


def test_closed_form_unsupported():
    with pytest.raises(UnsupportedDensityError, match="quadrature"):
        closed_form_pmf("gauss", 1.0, 0)


@pytest.mark.parametrize("kind", ["doubling", "beta", "cusp"])
def test_closed_form_agrees_with_quadrature(kind):
    m = rl.make_map(kind)
    for tau in TAU_GRID:
        for k in range(9):
            q = rl.poisson_like_pmf(m.density, tau, k).value
            c = closed_form_pmf(kind, tau, k)
            assert abs(q - c) <= 1e-8, (kind, tau, k)


@pytest.mark.parametrize("kind", ["doubling", "beta", "cusp", "gauss"])
def test_normalization_bounded_densities(kind):
    m = rl.make_map(kind)
    for tau in TAU_GRID:
        _, _, defect = rl.normalization_check(m.density, tau)
        assert defect <= 1e-6, (kind, tau)


def test_normalization_arcsine_with_tail_integral(logistic):
    for tau in (0.5, 2.0, 8.0):
        _, _, defect = rl.normalization_check(logistic.density, tau)
        assert defect <= 1e-6


def test_normalization_ulam_density(cusp):
    d = ulam_density(cusp, 1024)
    for tau in (0.5, 2.0):
        _, _, defect = rl.normalization_check(d, tau)
        assert defect <= 1e-6


MEAN_FACTORS = {
    "doubling": 1.0,
    "cusp": 2.0 / 3.0,
    "beta": 2 * GOLDEN**4 / (GOLDEN**2 + 1) ** 2,
    "gauss": 1.0 / (2 * math.log(2.0) ** 2),
}


@pytest.mark.parametrize("kind", sorted(MEAN_FACTORS))
def test_mean_identity(kind):
    m = rl.make_map(kind)
    assert rl.rho_square_integral(m.density) == pytest.approx(MEAN_FACTORS[kind], abs=1e-10)
    for tau in TAU_GRID:
        mean, target = rl.mean_check(m.density, tau)
        assert abs(mean - target) <= 1e-6, (kind, tau)


def test_mean_identity_needs_square_integrable(logistic):
    assert rl.rho_square_integral(logistic.density) == math.inf
    with pytest.raises(UnsupportedDensityError):
        rl.mean_check(logistic.density, 1.0)


def test_g0_strictly_decreasing(doubling, cusp, beta_golden):
    for m in (doubling, cusp, beta_golden):
        taus = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
        vals = [rl.poisson_like_pmf(m.density, t, 0).value for t in taus]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_limit_table_methods(cusp):
    t = rl.build_limit_table(cusp.density, (1.0, 2.0), 3, map_kind="cusp")
    t.validate()
    assert t.methods[0][0] == "closed_form"
    assert t.values[1, 0] == pytest.approx(0.29699707514508095, abs=1e-12)
    d = ulam_density(cusp, 256)
    t2 = rl.build_limit_table(d, (1.0,), 2, map_kind="cusp")
    assert t2.methods[0][0] == "bin_sum"


def test_evt_examples(doubling):
    d = doubling.density
    assert float(rl.evt_distribution(d, rl.PsiSpec("neglog"), 0.0)) == \
        pytest.approx(math.exp(-1.0), abs=1e-9)
    assert float(rl.evt_distribution(d, rl.PsiSpec("power", alpha=1.0), 2.0)) == \
        pytest.approx(math.exp(-0.5), abs=1e-9)
    # u -> inf: tau -> 0 so the distribution tends to 1
    assert float(rl.evt_distribution(d, rl.PsiSpec("neglog"), 40.0)) == \
        pytest.approx(1.0, abs=1e-6)
    sat = rl.evt_distribution(d, rl.PsiSpec("neglog"), -800.0)
    assert sat.saturated and sat.value == 0.0


def test_tail_classification_cusp_power(cusp):
    tc = rl.tail_classification(cusp.density, 0, 20.0)
    assert tc.kind == "power"
    assert tc.exponent == pytest.approx(-2.0, abs=0.1)
    # prefactor: G(tau,0) * tau^2 / 2 -> 1
    ratio = closed_form_pmf("cusp", 20.0, 0) * 400.0 / 2.0
    assert 0.99 <= ratio <= 1.0


def test_tail_classification_doubling_exponential(doubling):
    tc = rl.tail_classification(doubling.density, 0, 30.0)
    assert tc.kind == "exponential"
    assert tc.rate == pytest.approx(1.0, abs=0.02)


def test_tail_classification_beta_rate(beta_golden):
    tc = rl.tail_classification(beta_golden.density, 0, 60.0)
    assert tc.kind == "exponential"
    # the flatter piece dominates: rate -> rho2
    assert tc.rate == pytest.approx(RHO2, abs=0.05)


def test_log_pmf_underflow_safe(doubling):
    lv = log_pmf(doubling.density, 900.0, 0)
    assert lv == pytest.approx(-900.0, abs=1.0)


def test_summability_doubling_geometric(doubling):
    res = rl.as_summability_check(doubling.density, 1.0, [1.0])[0]
    assert res.is_convergent
    assert res.partial_sum == pytest.approx(1.0 / (math.e - 1.0), abs=1e-4)


def test_summability_cusp_zero_density_threshold(cusp):
    # density vanishing linearly at x = 1 (local exponent a = 1): the
    # criterion holds for gamma0 above a/(a+1) = 1/2 and fails below
    ok = rl.as_summability_check(cusp.density, 0.6, [1.0])[0]
    bad = rl.as_summability_check(cusp.density, 0.4, [1.0])[0]
    assert ok.verdict == "convergent"
    assert bad.verdict == "divergent"
    edge = rl.as_summability_check(cusp.density, 0.5, [1.0])[0]
    assert edge.verdict in ("undetermined", "divergent")   # never a false positive


def test_summability_beta_bounded_below(beta_golden):
    for g0 in (0.3, 0.7, 1.0):
        res = rl.as_summability_check(beta_golden.density, g0, [0.5, 2.0])
        assert all(r.is_convergent for r in res)


def test_quadrature_flagging(logistic):
    cfg = QuadratureConfig(abs_tol=1e-18, max_subdivisions=3)
    v = rl.poisson_like_pmf(logistic.density, 1.0, 0, cfg)
    assert v.flagged
    assert v.value == pytest.approx(rl.poisson_like_pmf(logistic.density, 1.0, 0).value,
                                    abs=1e-4)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0.0)
