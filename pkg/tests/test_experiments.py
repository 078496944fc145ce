import math
from fractions import Fraction

import numpy as np
import pytest

import recurlab as rl
from recurlab.errors import ConfigError, RunFailure
from recurlab.experiments import (
    ExperimentConfig,
    almost_sure_checkpoints,
    chen_stein_e2,
    check_assumption_A2,
    doubling_ej_exact,
    e2_exact_doubling,
    lower_radius,
    run_almost_sure,
    run_distributional,
    upper_radius,
    wilson_ci,
)


def small_cfg(**kw):
    base = dict(map_kind="doubling", n=512, samples=2000,
                tau_grid=(0.5, 1.0, 2.0), k_max=6, seed=1234)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(samples=10)
    with pytest.raises(ConfigError):
        ExperimentConfig(tau_grid=(2.0, 1.0))
    with pytest.raises(ConfigError):
        ExperimentConfig(subseq_base=0.9)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus_key": 1})


def test_config_roundtrip():
    cfg = small_cfg()
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_distributional_bucket_invariants():
    res = run_distributional(small_cfg())
    emp = res.empirical
    emp.validate()
    assert emp.counts.shape == (3, 8)
    assert emp.excluded == 0
    ci = emp.wilson()
    assert np.all(ci[..., 0] >= 0) and np.all(ci[..., 1] <= 1)
    assert np.all(ci[..., 0] <= emp.phat) and np.all(emp.phat <= ci[..., 1])


def test_distributional_worker_independence():
    base = run_distributional(small_cfg(workers=1))
    for w in (2, 8):
        other = run_distributional(small_cfg(workers=w))
        assert np.array_equal(base.empirical.counts, other.empirical.counts)
        assert np.array_equal(base.empirical.ties, other.empirical.ties)


def test_workers_env_override(monkeypatch):
    from recurlab.experiments import resolve_workers
    monkeypatch.setenv("RECURLAB_WORKERS", "3")
    assert resolve_workers(small_cfg(workers=1)) == 3
    monkeypatch.delenv("RECURLAB_WORKERS")
    assert resolve_workers(small_cfg(workers=2)) == 2
    # the engine result is identical under the env override too
    monkeypatch.setenv("RECURLAB_WORKERS", "4")
    a = run_distributional(small_cfg())
    monkeypatch.delenv("RECURLAB_WORKERS")
    b = run_distributional(small_cfg())
    assert np.array_equal(a.empirical.counts, b.empirical.counts)


def test_distributional_seed_sensitivity():
    a = run_distributional(small_cfg())
    b = run_distributional(small_cfg(seed=999))
    assert not np.array_equal(a.empirical.counts, b.empirical.counts)


def test_distributional_mean_of_counts():
    # empirical mean of R_n at tau close to tau * integral rho^2 (= tau here)
    res = run_distributional(small_cfg(samples=4000, tau_grid=(1.0,), k_max=12))
    counts = res.empirical.counts[0]
    ks = np.arange(len(counts))
    mean = float((counts * ks).sum()) / counts.sum()
    std = float(np.sqrt((counts * (ks - mean) ** 2).sum() / counts.sum()))
    assert abs(mean - 1.0) <= 4 * std / math.sqrt(counts.sum()) + 0.01


def test_distributional_degenerate_tau():
    res = run_distributional(small_cfg(tau_grid=(0.001,), k_max=3))
    assert res.empirical.phat[0, 0] >= 0.99


@pytest.mark.parametrize("kind", ["gauss", "logistic"])
def test_distributional_other_maps_smoke(kind):
    # exercise the remaining fixed-point steppers end to end at small scale
    cfg = small_cfg(map_kind=kind, n=128, samples=300, tau_grid=(1.0,), k_max=4)
    res = run_distributional(cfg)
    assert res.empirical.excluded == 0
    assert 0.0 <= res.max_tv <= 1.0


def test_hardware_negative_control():
    with pytest.raises(RunFailure, match="abort"):
        run_distributional(small_cfg(precision_kind="hardware", samples=200))


def test_wilson_ci_basic():
    lo, hi = wilson_ci(368, 1000)
    assert lo < 0.368 < hi
    assert hi - lo < 0.09
    assert wilson_ci(0, 0) == (0.0, 1.0)


# -- almost sure ------------------------------------------------------------

def test_almost_sure_checkpoints_rule():
    cfg = small_cfg(subseq_base=1.5, as_n_max=1000)
    cks = almost_sure_checkpoints(cfg)
    ns = [n for _, n in cks]
    assert ns == sorted(set(ns))
    assert all(16 <= n <= 1000 for n in ns)
    assert ns[0] == 17                      # floor(1.5^7)
    assert all(n == math.floor(1.5 ** k) for k, n in cks)


def test_almost_sure_radius_rules():
    assert upper_radius(100, 1.0) == pytest.approx(math.log(math.log(100)) / 100)
    assert lower_radius(100) == pytest.approx(1.0 / (100 * math.log(100) ** 2))


def test_almost_sure_small_run():
    cfg = small_cfg(as_n_max=4096, as_paths=400, subseq_base=1.5, as_c=1.0)
    rows = run_almost_sure(cfg)
    assert all(0.0 <= r.upper_freq <= 1.0 for r in rows)
    # upper-violation frequency decays towards (ln n)^-2c
    assert rows[-1].upper_freq < 0.2
    lo, hi = rows[-1].upper_ci()
    assert lo <= rows[-1].upper_freq <= hi


# -- A2 ---------------------------------------------------------------------

def brute_force_ej(j: int, r: float, grid_bits: int = 20) -> float:
    """Independent enumeration of Leb(E_j(r)) on the dyadic grid."""
    N = 1 << grid_bits
    x = np.arange(N, dtype=np.uint64)
    fj = (x << np.uint64(j)) & np.uint64(N - 1)
    d = np.where(fj >= x, fj - x, x - fj)
    return float((d <= np.uint64(int(r * N))).sum()) / N


@pytest.mark.parametrize("j", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("r", [0.01, 0.001, 0.3])
def test_doubling_ej_exact_against_brute_force(j, r):
    exact = doubling_ej_exact(j, Fraction(r).limit_denominator(10**6))
    brute = brute_force_ej(j, r)
    assert abs(exact - brute) < 2.0 ** -16


def test_doubling_ej_exact_is_2r_for_small_r():
    # edge branches hold half windows: the total is exactly 2r, not
    # 2r * 2^j/(2^j - 1)
    assert doubling_ej_exact(1, Fraction(1, 100)) == pytest.approx(0.02, abs=1e-15)
    assert doubling_ej_exact(3, Fraction(1, 100)) == pytest.approx(0.02, abs=1e-15)
    assert doubling_ej_exact(3, Fraction(1, 1000)) == pytest.approx(0.002, abs=1e-16)


def test_a2_report_doubling():
    cfg = small_cfg(a2_n_grid=(64, 256, 1024), a2_samples=100_000,
                    a2_a_exponent=0.9, seed=2024)
    rep = check_assumption_A2(cfg)
    assert 0.9 <= rep.beta0 <= 1.1
    rows = [r for r in rep.rows if r.oracle is not None and not r.flagged]
    assert rows
    within = [r.ci_lo <= r.oracle <= r.ci_hi for r in rows]
    assert np.mean(within) >= 0.95        # 99% CIs; a stray miss is expected
    # r -> 0: the measure vanishes
    tiny = check_assumption_A2(small_cfg(a2_n_grid=(4096,), a2_samples=20_000,
                                         a2_a_exponent=0.99, a2_j_max=5))
    assert all(r.mu_hat < 0.01 for r in tiny.rows)


def test_a2_exponent_validation():
    with pytest.raises(ConfigError):
        check_assumption_A2(small_cfg(), a_exponent=1.5)


# -- E2 ---------------------------------------------------------------------

def test_e2_exact_interval_oracle():
    # A = [0, r): E2(p) = r * (1/2 + ... + 1/2^p)
    r = 0.01
    assert e2_exact_doubling(0.0, r, 5) == pytest.approx(r * (31 / 32), abs=1e-15)
    assert e2_exact_doubling(0.0, r, 1) == pytest.approx(r / 2, abs=1e-15)


def test_e2_zero_terms():
    res = chen_stein_e2(small_cfg(), center=0.0, r=0.01, p=0)
    assert res.estimate == 0.0 and res.per_j == []


def test_e2_monte_carlo_vs_exact():
    cfg = small_cfg(e2_samples=400_000, seed=31)
    res = chen_stein_e2(cfg, center=0.0, r=0.01, p=5)
    exact = e2_exact_doubling(0.0, 0.01, 5)
    sigma = math.sqrt(exact / cfg.e2_samples) * 3  # generous: terms correlate
    assert abs(res.estimate - exact) < 5 * sigma
    for j, mu, lo, hi in res.per_j:
        assert lo <= hi


def test_e2_periodic_vs_generic_center():
    cfg = small_cfg(e2_samples=400_000, seed=33)
    periodic = chen_stein_e2(cfg, center=0.0, r=0.01, p=5)
    generic = chen_stein_e2(cfg, center=math.sqrt(2) - 1, r=0.01, p=5)
    assert generic.estimate <= periodic.estimate / 5.0
