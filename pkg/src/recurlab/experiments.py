"""Monte Carlo harness tying orbit engines to the limit laws.

run_distributional estimates the pmf of R_n(tau/2n, x) over x ~ mu and
compares it to the averaged-Poisson table; run_almost_sure tracks violations
of the almost-sure envelope along the subsequence n_k = floor(a^k);
check_assumption_A2 and chen_stein_e2 are the short-return diagnostics.

Determinism contract: every sample owns a counter-mode RNG stream indexed by
its sample number, and reductions are integer sums, so results are identical
for any worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import _engines
from ._fixedpoint import make_stepper, sample_fixed
from ._rng import (
    PURPOSE_A2,
    PURPOSE_ALMOST_SURE,
    PURPOSE_DISTRIBUTIONAL,
    PURPOSE_E2,
    philox_key,
    sample_generator,
)
from .errors import ConfigError, RunFailure
from .limitlaw import LimitLawTable, QuadratureConfig, build_limit_table
from .maps import MapModel, make_map
from .orbit import required_bits
from .ulam import ulam_density

Z99 = 2.5758293035489004      # two-sided 99% normal quantile


def wilson_ci(successes: int, n: int, z: float = Z99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "map": str, "beta": float, "gamma": float,
    "density.source": str, "ulam.bins": int, "ulam.subdiv": int,
    "run.n": int, "run.samples": int, "run.tau_grid": list, "run.k_max": int,
    "run.seed": int, "run.workers": int, "run.burn_in": int,
    "precision.kind": str, "precision.bits": int, "precision.slack_bits": int,
    "precision.abort_fraction": float,
    "almost_sure.subseq_base": float, "almost_sure.c": float,
    "almost_sure.n_max": int, "almost_sure.paths": int,
    "a2.a_exponent": float, "a2.n_grid": list, "a2.j_max": int,
    "a2.samples": int, "a2.r_list": list,
    "e2.center": float, "e2.r": float, "e2.p": int, "e2.samples": int,
    "report.strict_tv": float,
}


@dataclass
class ExperimentConfig:
    map_kind: str = "doubling"
    beta: Optional[float] = None
    gamma: Optional[float] = None
    density_source: str = "closed_form"      # closed_form | ulam | histogram
    ulam_bins: int = 4096
    ulam_subdiv: int = 32
    n: int = 4096
    samples: int = 20000
    tau_grid: tuple[float, ...] = (0.5, 1.0, 2.0)
    k_max: int = 6
    seed: int = 20260810
    workers: int = 1
    burn_in: int = 10000
    precision_kind: str = "auto"             # auto | hardware | bigfixed | dyadic
    precision_bits: int = 0
    slack_bits: int = 64
    abort_fraction: float = 0.125
    subseq_base: float = 1.5
    as_c: float = 1.0
    as_n_max: int = 65536
    as_paths: int = 2000
    a2_a_exponent: float = 0.9
    a2_n_grid: tuple[int, ...] = (256, 1024, 4096)
    a2_j_max: int = 0                        # 0 -> ceil(ln(n)^2)
    a2_samples: int = 200000
    a2_r_list: tuple[float, ...] = ()
    e2_center: float = 0.0
    e2_r: float = 0.01
    e2_p: int = 5
    e2_samples: int = 1000000
    strict_tv: float = 0.02

    def __post_init__(self):
        if self.samples < 100:
            raise ConfigError("run.samples", "needs at least 100 samples")
        taus = tuple(float(t) for t in self.tau_grid)
        if any(t <= 0 for t in taus) or list(taus) != sorted(taus):
            raise ConfigError("run.tau_grid", "must be positive and ascending")
        self.tau_grid = taus
        if self.subseq_base <= 1.0:
            raise ConfigError("almost_sure.subseq_base", "must exceed 1")
        if self.map_kind not in ("doubling", "beta", "gauss", "mp", "cusp", "logistic"):
            raise ConfigError("map", f"unknown map {self.map_kind!r}")
        if self.density_source not in ("closed_form", "ulam", "histogram"):
            raise ConfigError("density.source", f"unknown source {self.density_source!r}")
        if self.precision_kind not in ("auto", "hardware", "bigfixed", "dyadic"):
            raise ConfigError("precision.kind", f"unknown kind {self.precision_kind!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        flat = {}

        def walk(prefix, obj):
            for key, val in obj.items():
                path = f"{prefix}.{key}" if prefix else key
                if isinstance(val, dict):
                    walk(path, val)
                else:
                    flat[path] = val

        walk("", raw)
        for key in flat:
            if key not in _KNOWN_KEYS:
                raise ConfigError(key, "unknown configuration key")
        kw = {}
        rename = {
            "map": "map_kind", "beta": "beta", "gamma": "gamma",
            "density.source": "density_source", "ulam.bins": "ulam_bins",
            "ulam.subdiv": "ulam_subdiv",
            "run.n": "n", "run.samples": "samples", "run.tau_grid": "tau_grid",
            "run.k_max": "k_max", "run.seed": "seed", "run.workers": "workers",
            "run.burn_in": "burn_in",
            "precision.kind": "precision_kind", "precision.bits": "precision_bits",
            "precision.slack_bits": "slack_bits",
            "precision.abort_fraction": "abort_fraction",
            "almost_sure.subseq_base": "subseq_base", "almost_sure.c": "as_c",
            "almost_sure.n_max": "as_n_max", "almost_sure.paths": "as_paths",
            "a2.a_exponent": "a2_a_exponent", "a2.n_grid": "a2_n_grid",
            "a2.j_max": "a2_j_max", "a2.samples": "a2_samples",
            "a2.r_list": "a2_r_list",
            "e2.center": "e2_center", "e2.r": "e2_r", "e2.p": "e2_p",
            "e2.samples": "e2_samples",
            "report.strict_tv": "strict_tv",
        }
        for key, val in flat.items():
            field_name = rename[key]
            if isinstance(val, list):
                val = tuple(val)
            kw[field_name] = val
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "map": self.map_kind, "beta": self.beta, "gamma": self.gamma,
            "density": {"source": self.density_source},
            "ulam": {"bins": self.ulam_bins, "subdiv": self.ulam_subdiv},
            "run": {"n": self.n, "samples": self.samples,
                    "tau_grid": list(self.tau_grid), "k_max": self.k_max,
                    "seed": self.seed, "workers": self.workers,
                    "burn_in": self.burn_in},
            "precision": {"kind": self.precision_kind, "bits": self.precision_bits,
                          "slack_bits": self.slack_bits,
                          "abort_fraction": self.abort_fraction},
            "almost_sure": {"subseq_base": self.subseq_base, "c": self.as_c,
                            "n_max": self.as_n_max, "paths": self.as_paths},
            "a2": {"a_exponent": self.a2_a_exponent,
                   "n_grid": list(self.a2_n_grid), "j_max": self.a2_j_max,
                   "samples": self.a2_samples, "r_list": list(self.a2_r_list)},
            "e2": {"center": self.e2_center, "r": self.e2_r, "p": self.e2_p,
                   "samples": self.e2_samples},
            "report": {"strict_tv": self.strict_tv},
        }


def resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get("RECURLAB_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, cfg.workers)


def resolve_map(cfg: ExperimentConfig) -> MapModel:
    m = make_map(cfg.map_kind, beta=cfg.beta, gamma=cfg.gamma)
    if cfg.density_source in ("ulam", "histogram"):
        dens = ulam_density(m, cfg.ulam_bins, cfg.ulam_subdiv)
        if cfg.density_source == "histogram":
            dens = replace(dens, kind="histogram")
        m = m.with_density(dens)
    return m


# ---------------------------------------------------------------------------
# distributional experiment
# ---------------------------------------------------------------------------

@dataclass
class EmpiricalPmf:
    """Bucketed counts of R_n per tau; bucket k_max+1 collects overflow."""

    counts: np.ndarray           # (n_tau, k_max+2) int64
    samples: int                 # samples contributing (excluded aborts removed)
    excluded: int
    ties: np.ndarray             # per-tau near-threshold tallies

    @property
    def phat(self) -> np.ndarray:
        return self.counts / max(self.samples, 1)

    def wilson(self, z: float = Z99) -> np.ndarray:
        out = np.zeros(self.counts.shape + (2,))
        for ti in range(self.counts.shape[0]):
            for b in range(self.counts.shape[1]):
                out[ti, b] = wilson_ci(int(self.counts[ti, b]), self.samples, z)
        return out

    def validate(self) -> None:
        sums = self.counts.sum(axis=1)
        if not np.all(sums == self.samples):
            raise AssertionError("bucket counts must sum to the retained samples")


@dataclass
class DistributionalResult:
    config: ExperimentConfig
    empirical: EmpiricalPmf
    theory: LimitLawTable
    tv_distance: np.ndarray         # per tau
    max_abs_dev: np.ndarray         # per tau, over k = 0..k_max
    engine: dict = field(default_factory=dict)

    @property
    def max_tv(self) -> float:
        return float(np.max(self.tv_distance))


def _bucket(counts: np.ndarray, k_max: int) -> np.ndarray:
    """Histogram per-sample counts into k buckets plus overflow."""
    T = counts.shape[1]
    hist = np.zeros((T, k_max + 2), dtype=np.int64)
    for t in range(T):
        col = counts[:, t]
        col = col[col >= 0]
        np.add.at(hist[t], np.minimum(col, k_max + 1), 1)
    return hist


def _dist_chunk(payload: dict) -> dict:
    """One worker's share of the distributional run (module-level: picklable)."""
    m: MapModel = payload["map"]
    key = payload["key"]
    first, count = payload["first"], payload["count"]
    n, k_max = payload["n"], payload["k_max"]
    radii = payload["radii"]
    engine = payload["engine"]
    if engine == "dyadic":
        r64s = [_engines.radius_to_r64(r) for r in radii]
        res = _engines.doubling_recurrence_batch(key, first, count, n, r64s)
        counts = res.counts
        for s in res.suspects.tolist():
            counts[s] = _engines.doubling_exact_count(res.words[s], n, r64s)
        return {"hist": _bucket(counts, k_max), "ties": res.ties,
                "excluded": 0, "abort_steps": []}
    if engine == "hardware":
        res = _engines.hardware_recurrence_batch(
            m, key, first, count, n, radii,
            abort_fraction=payload["abort_fraction"], burn_in=payload["burn_in"])
    else:
        res = _engines.fixed_recurrence_batch(
            m, key, first, count, n, radii, payload["bits"],
            slack_bits=payload["slack_bits"],
            abort_fraction=payload["abort_fraction"], burn_in=payload["burn_in"])
    return {"hist": _bucket(res.counts, k_max), "ties": res.ties,
            "excluded": int(res.aborted.sum()),
            "abort_steps": res.abort_steps}


def _run_chunked(payload_base: dict, samples: int, workers: int) -> list[dict]:
    chunks = []
    per = -(-samples // workers)
    first = 0
    while first < samples:
        count = min(per, samples - first)
        chunk = dict(payload_base)
        chunk["first"] = first
        chunk["count"] = count
        chunks.append(chunk)
        first += count
    if len(chunks) == 1:
        return [_dist_chunk(chunks[0])]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(processes=workers) as pool:
        return pool.map(_dist_chunk, chunks)


def run_distributional(cfg: ExperimentConfig) -> DistributionalResult:
    """Estimate the pmf of R_n(tau/2n, .) and compare it with the limit law.

    Fails (RunFailure) when more than 0.1% of orbits hit the precision-abort
    contract; fewer are excluded from the pmf and reported.
    """
    m = resolve_map(cfg)
    n = cfg.n
    radii = [t / (2.0 * n) for t in cfg.tau_grid]
    engine, bits, budget = _select_engine(m, cfg)
    key = philox_key(cfg.seed, PURPOSE_DISTRIBUTIONAL)
    payload = {
        "map": m, "key": key, "n": n, "k_max": cfg.k_max, "radii": radii,
        "engine": engine, "bits": bits, "slack_bits": cfg.slack_bits,
        "abort_fraction": cfg.abort_fraction, "burn_in": cfg.burn_in,
    }
    parts = _run_chunked(payload, cfg.samples, resolve_workers(cfg))
    hist = sum(p["hist"] for p in parts)
    ties = sum(p["ties"] for p in parts)
    excluded = sum(p["excluded"] for p in parts)
    abort_steps = [s for p in parts for s in p["abort_steps"]]
    if excluded > 0.001 * cfg.samples:
        raise RunFailure(
            f"{excluded}/{cfg.samples} orbits hit the precision-abort contract "
            f"(engine={engine}, bits={bits}); first aborts: {abort_steps[:5]}")
    emp = EmpiricalPmf(hist, cfg.samples - excluded, excluded,
                       np.asarray(ties, dtype=np.int64))
    emp.validate()

    theory = build_limit_table(m.density, cfg.tau_grid, cfg.k_max,
                               QuadratureConfig(), map_kind=m.kind)
    tv = np.zeros(len(cfg.tau_grid))
    dev = np.zeros(len(cfg.tau_grid))
    phat = emp.phat
    for ti in range(len(cfg.tau_grid)):
        g = theory.values[ti]
        g_over = theory.overflow_mass(ti)
        diffs = np.abs(phat[ti, :-1] - g)
        tv[ti] = 0.5 * (diffs.sum() + abs(phat[ti, -1] - g_over))
        dev[ti] = diffs.max()
    engine_meta = {"engine": engine, "bits": bits, "excluded": excluded,
                   "abort_steps": abort_steps[:100]}
    if budget is not None:
        engine_meta["budget"] = {
            "bits_required": budget.bits_required,
            "best_effort": budget.best_effort,
            "lyapunov_estimate": budget.lyapunov_estimate,
        }
    return DistributionalResult(cfg, emp, theory, tv, dev, engine_meta)


# Intermittent maps have heavy-tailed fluctuations of the log-derivative sum
# (laminar phases), so auto-sized best-effort orbits carry a 20% margin over
# the plain Lyapunov budget; the runtime monitor still aborts on the residual
# tail rather than emit bad distances.
BEST_EFFORT_MARGIN = 1.2


def auto_bits(m: MapModel, n: int, slack_bits: int):
    budget = required_bits(m, n, slack_bits)
    bits = budget.bits_required
    if budget.best_effort:
        bits = math.ceil(BEST_EFFORT_MARGIN * (bits - 4 * slack_bits)) + 4 * slack_bits
    return bits, budget


def _select_engine(m: MapModel, cfg: ExperimentConfig):
    kind = cfg.precision_kind
    if kind == "auto":
        kind = "dyadic" if m.kind == "doubling" else "bigfixed"
    if kind == "dyadic":
        if m.kind != "doubling":
            raise ConfigError("precision.kind", "dyadic is doubling-only")
        return "dyadic", 0, None
    if kind == "hardware":
        return "hardware", 53, None
    bits, budget = auto_bits(m, cfg.n, cfg.slack_bits)
    if cfg.precision_bits:
        bits = cfg.precision_bits
    return "bigfixed", bits, budget


# ---------------------------------------------------------------------------
# almost-sure experiment
# ---------------------------------------------------------------------------

@dataclass
class AlmostSureRow:
    k_index: int
    n_k: int
    r_upper: float
    s_lower: float
    viol_upper: int
    viol_lower: int
    paths: int

    @property
    def upper_freq(self) -> float:
        return self.viol_upper / self.paths

    @property
    def lower_freq(self) -> float:
        return self.viol_lower / self.paths

    def upper_ci(self) -> tuple[float, float]:
        return wilson_ci(self.viol_upper, self.paths)

    def lower_ci(self) -> tuple[float, float]:
        return wilson_ci(self.viol_lower, self.paths)


def almost_sure_checkpoints(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    """(k, n_k) pairs with n_k = floor(base^k) in [16, n_max], deduplicated."""
    out = []
    seen = set()
    k = 1
    while True:
        n_k = int(math.floor(cfg.subseq_base ** k))
        if n_k > cfg.as_n_max:
            break
        if n_k >= 16 and n_k not in seen:
            out.append((k, n_k))
            seen.add(n_k)
        k += 1
    if not out:
        raise ConfigError("almost_sure.n_max", "no checkpoints >= 16 below n_max")
    return out


def upper_radius(n: int, c: float) -> float:
    return c * math.log(math.log(n)) / n


def lower_radius(n: int) -> float:
    return 1.0 / (n * math.log(n) ** 2)


def run_almost_sure(cfg: ExperimentConfig) -> list[AlmostSureRow]:
    """Violation frequencies of the almost-sure envelope along n_k.

    Upper violation at n_k: the running minimum has not yet dropped below
    r_{n_k} = c ln ln n_k / n_k. Lower violation: it has dropped to or below
    the summable sequence s_n = 1/(n ln^2 n).
    """
    m = resolve_map(cfg)
    cks = almost_sure_checkpoints(cfg)
    ns = [n for _, n in cks]
    key = philox_key(cfg.seed, PURPOSE_ALMOST_SURE)
    paths = cfg.as_paths
    r_up = [upper_radius(n, cfg.as_c) for n in ns]
    s_lo = [lower_radius(n) for n in ns]

    if m.kind == "doubling" and cfg.precision_kind in ("auto", "dyadic"):
        minD, words = _engines.doubling_min_batch(key, 0, paths, ns)
        # bookkeeping consistency: the recorded running minimum can only fall
        if np.any(minD[:, 1:] > minD[:, :-1]):
            raise RunFailure("running-minimum vector increased along a path")
        up64 = np.array([min(_engines.radius_to_r64(r) + 1, 2**64 - 1)
                         for r in r_up], dtype=np.uint64)
        lo64 = np.array([min(_engines.radius_to_r64(s) + 1, 2**64 - 1)
                         for s in s_lo], dtype=np.uint64)
        # suspects: window min exactly at a threshold; re-resolve exactly
        up_viol = (minD > up64[None, :])
        lo_viol = (minD <= lo64[None, :])
        suspect = (minD == up64[None, :]) | (minD == lo64[None, :]) \
            | (minD == lo64[None, :] + np.uint64(1))
        for s, kidx in zip(*np.nonzero(suspect)):
            mins = _exact_min_profile(words[s], ns)
            thr_u = Fraction(int(up64[kidx]), 1 << 64)
            thr_l = Fraction(int(lo64[kidx]), 1 << 64)
            up_viol[s, kidx] = mins[kidx] > thr_u
            lo_viol[s, kidx] = mins[kidx] <= thr_l
        up_counts = up_viol.sum(axis=0)
        lo_counts = lo_viol.sum(axis=0)
    else:
        bits, budget = auto_bits(m, ns[-1], cfg.slack_bits)
        if cfg.precision_bits:
            bits = cfg.precision_bits
        mins, aborted = _engines.fixed_min_checkpoints(
            m, key, 0, paths, ns, bits, slack_bits=cfg.slack_bits,
            abort_fraction=cfg.abort_fraction,
            min_radius=min(s_lo), burn_in=cfg.burn_in)
        if aborted.sum() > 0.001 * paths:
            raise RunFailure(f"{int(aborted.sum())}/{paths} paths aborted")
        stepper = make_stepper(m, bits)
        bits = stepper.bits
        from ._fixedpoint import radius_threshold
        up_counts = np.zeros(len(ns), dtype=np.int64)
        lo_counts = np.zeros(len(ns), dtype=np.int64)
        for i in range(paths):
            if aborted[i]:
                continue
            for kidx in range(len(ns)):
                d = mins[i][kidx]
                up_counts[kidx] += d > radius_threshold(r_up[kidx], bits, cfg.slack_bits)
                lo_counts[kidx] += d <= radius_threshold(s_lo[kidx], bits, cfg.slack_bits)
        paths -= int(aborted.sum())

    return [
        AlmostSureRow(k, n, r_up[i], s_lo[i], int(up_counts[i]),
                      int(lo_counts[i]), paths)
        for i, (k, n) in enumerate(cks)
    ]


def _exact_min_profile(words_row: np.ndarray, checkpoints: Sequence[int]) -> list:
    """Exact running-min distances of one doubling bitstream at checkpoints."""
    L = 64 * len(words_row)
    value = 0
    for w in words_row.tolist():
        value = (value << 64) | int(w)
    f0 = Fraction(value, 1 << L)
    out = []
    best = None
    ck = {int(c): i for i, c in enumerate(checkpoints)}
    out = [None] * len(checkpoints)
    for j in range(1, int(checkpoints[-1]) + 1):
        rem = L - j
        fj = Fraction(value & ((1 << rem) - 1), 1 << rem)
        d = abs(fj - f0)
        if best is None or d < best:
            best = d
        if j in ck:
            out[ck[j]] = best
    return out


# ---------------------------------------------------------------------------
# assumption (A2) diagnostic
# ---------------------------------------------------------------------------

def doubling_ej_exact(j: int, r) -> float:
    """Exact Leb{x : |2^j x mod 1 - x| <= r} by per-branch interval counting.

    On branch [i/2^j, (i+1)/2^j) the distance is |(2^j-1)x - i|; each branch
    contributes its window [(i-r)/(2^j-1), (i+r)/(2^j-1)] clipped to the
    branch (edge branches hold only half windows, so the total is exactly
    2r for r below the branch scale).
    """
    r = Fraction(r) if not isinstance(r, Fraction) else r
    M = 1 << j
    D = M - 1
    total = Fraction(0)
    for i in range(M):
        lo = max(Fraction(i, M), Fraction(i - r, D))
        hi = min(Fraction(i + 1, M), Fraction(i + r, D))
        if hi > lo:
            total += hi - lo
    return float(min(total, 1))


def _window_at(words: np.ndarray, j: int) -> np.ndarray:
    """64-bit window of each packed bitstream starting at bit offset j."""
    i, sh = j >> 6, j & 63
    if sh == 0:
        return words[:, i].copy()
    return (words[:, i] << np.uint64(sh)) | (words[:, i + 1] >> np.uint64(64 - sh))


@dataclass
class A2Row:
    n: int
    j: int
    r: float
    mu_hat: float
    ci_lo: float
    ci_hi: float
    oracle: Optional[float]
    flagged: bool


@dataclass
class AssumptionReport:
    a_exponent: float
    rows: list
    beta0: float
    samples: int

    def rows_for(self, n: int) -> list:
        return [row for row in self.rows if row.n == n]


def check_assumption_A2(cfg: ExperimentConfig,
                        a_exponent: Optional[float] = None) -> AssumptionReport:
    """Monte Carlo mu{x : d(x, f^j x) <= r_n} for j <= ceil(ln(n)^2).

    r_n = n^-a on the configured n-grid (plus any explicit radii from
    a2.r_list attached to the largest n). For the doubling map the estimate
    is exact-in-x (dyadic integer arithmetic) and the exact branch-counting
    oracle is attached per row; rows whose 99% CI is wider than 50% of the
    estimate are flagged and excluded from the beta0 fit.
    """
    a = cfg.a2_a_exponent if a_exponent is None else a_exponent
    if not 0.0 < a < 1.0:
        raise ConfigError("a2.a_exponent", "must lie in (0,1)")
    m = resolve_map(cfg)
    key = philox_key(cfg.seed, PURPOSE_A2)
    rows: list[A2Row] = []
    tasks = [(n, float(n) ** (-a)) for n in cfg.a2_n_grid]
    tasks += [(max(cfg.a2_n_grid), float(r)) for r in cfg.a2_r_list]
    for n, r in tasks:
        j_max = cfg.a2_j_max or math.ceil(math.log(n) ** 2)
        rows.extend(_a2_rows(m, key, n, r, j_max, cfg.a2_samples))
    pts = [(math.log(row.r), math.log(row.mu_hat))
           for row in rows if not row.flagged and row.mu_hat > 0]
    if len(pts) >= 2:
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        A = np.vstack([np.ones_like(xs), xs]).T
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        beta0 = float(coef[1])
    else:
        beta0 = math.nan
    return AssumptionReport(a, rows, beta0, cfg.a2_samples)


def _a2_rows(m: MapModel, key, n: int, r: float, j_max: int,
             samples: int) -> list[A2Row]:
    if m.kind == "doubling":
        words_per = (j_max + 64) // 64 + 2
        words = _rng_bits(key, n, samples, words_per)
        W0 = _window_at(words, 0)
        thr = np.uint64(min(_engines.radius_to_r64(r) + 1, 2**64 - 1))
        hits = np.zeros(j_max + 1, dtype=np.int64)
        for j in range(1, j_max + 1):
            Wj = _window_at(words, j)
            hits[j] = int((_abs_window_dist(Wj, W0) <= thr).sum())
        # branch enumeration is O(2^j): attach the oracle where it is cheap
        oracle = {j: doubling_ej_exact(j, Fraction(r))
                  for j in range(1, min(j_max, 16) + 1)}
    else:
        hits = _a2_hits_generic(m, key, n, r, j_max, samples)
        oracle = {}
    rows = []
    for j in range(1, j_max + 1):
        mu = hits[j] / samples
        lo, hi = wilson_ci(int(hits[j]), samples)
        flagged = (hi - lo) > 0.5 * mu if mu > 0 else True
        rows.append(A2Row(n, j, r, mu, lo, hi, oracle.get(j), flagged))
    return rows


def _rng_bits(key, n: int, samples: int, words_per: int) -> np.ndarray:
    from ._rng import bit_matrix
    # fold n into the sample index block so different n draw fresh points
    return bit_matrix(key, (n % (1 << 20)) << 40, samples, words_per)


def _a2_hits_generic(m: MapModel, key, n: int, r: float, j_max: int,
                     samples: int) -> np.ndarray:
    budget = required_bits(m, j_max, 64)
    bits = budget.bits_required
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    from ._fixedpoint import radius_threshold
    thr = radius_threshold(r, bits, 64)
    hits = np.zeros(j_max + 1, dtype=np.int64)
    for i in range(samples):
        gen = sample_generator(key, ((n % (1 << 20)) << 40) + i)
        X0 = sample_fixed(m, gen, bits, burn_in=2000)
        X = X0
        for j in range(1, j_max + 1):
            X = stepper.step(X)
            d = X - X0
            if d < 0:
                d = -d
            if d <= thr:
                hits[j] += 1
    return hits


# ---------------------------------------------------------------------------
# Chen-Stein short-return sum E2
# ---------------------------------------------------------------------------

@dataclass
class E2Result:
    center: float
    r: float
    p: int
    estimate: float
    per_j: list                   # (j, mu_hat, ci_lo, ci_hi)
    samples: int


def chen_stein_e2(cfg: ExperimentConfig, center: Optional[float] = None,
                  r: Optional[float] = None, p: Optional[int] = None) -> E2Result:
    """Monte Carlo estimate of sum_{j<=p} mu(A meet f^-j A), A = B(center, r)."""
    center = cfg.e2_center if center is None else center
    r = cfg.e2_r if r is None else r
    p = cfg.e2_p if p is None else p
    if p < 0:
        raise ConfigError("e2.p", "p must be nonnegative")
    m = resolve_map(cfg)
    samples = cfg.e2_samples
    key = philox_key(cfg.seed, PURPOSE_E2)
    per_j = []
    total = 0.0
    if p == 0:
        return E2Result(center, r, 0, 0.0, [], samples)

    if m.kind == "doubling":
        words_per = (p + 64) // 64 + 2
        words = _rng_bits(key, 1, samples, words_per)
        W0 = _window_at(words, 0)
        c64 = np.uint64(_engines.radius_to_r64(center % 1.0))
        thr = np.uint64(min(_engines.radius_to_r64(r) + 1, 2**64 - 1))
        in_A0 = _abs_window_dist(W0, c64) <= thr
        for j in range(1, p + 1):
            Wj = _window_at(words, j)
            in_Aj = _abs_window_dist(Wj, c64) <= thr
            hits = int((in_A0 & in_Aj).sum())
            mu = hits / samples
            lo, hi = wilson_ci(hits, samples)
            per_j.append((j, mu, lo, hi))
            total += mu
    else:
        from .maps import sample_invariant_batch
        gen = sample_generator(key, 0)
        x = sample_invariant_batch(m, gen, samples, burn_in=cfg.burn_in)
        in_A0 = np.abs(x - center) <= r
        from .maps import eval_map_batch
        y = x.copy()
        for j in range(1, p + 1):
            y = eval_map_batch(m, y)
            in_Aj = np.abs(y - center) <= r
            hits = int((in_A0 & in_Aj).sum())
            mu = hits / samples
            lo, hi = wilson_ci(hits, samples)
            per_j.append((j, mu, lo, hi))
            total += mu
    return E2Result(center, r, p, total, per_j, samples)


def _abs_window_dist(a: np.ndarray, b) -> np.ndarray:
    """|a - b| for uint64 fixed-point fractions (no circle wrap)."""
    return np.where(a >= b, a - b, b - a)


def e2_exact_doubling(center: float, r: float, p: int) -> float:
    """Exact interval computation of E2 for the doubling map."""
    c = Fraction(center)
    rr = Fraction(r)
    a0 = max(c - rr, Fraction(0))
    b0 = min(c + rr, Fraction(1))
    total = Fraction(0)
    for j in range(1, p + 1):
        M = 1 << j
        for i in range(M):
            lo = (a0 + i) / M
            hi = (b0 + i) / M
            s = max(lo, a0)
            t = min(hi, b0)
            if t > s:
                total += t - s
    return float(total)


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------

def write_report_json(path: str, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_pmf_csv(path: str, result: DistributionalResult) -> None:
    emp, theory = result.empirical, result.theory
    phat = emp.phat
    ci = emp.wilson()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "k", "count", "phat", "ci_lo", "ci_hi", "G", "method"])
        for ti, tau in enumerate(result.config.tau_grid):
            for b in range(emp.counts.shape[1]):
                overflow = b == emp.counts.shape[1] - 1
                g = theory.overflow_mass(ti) if overflow else float(theory.values[ti, b])
                method = "overflow" if overflow else theory.methods[ti][b]
                w.writerow([repr(float(tau)), b, int(emp.counts[ti, b]),
                            repr(float(phat[ti, b])), repr(float(ci[ti, b, 0])),
                            repr(float(ci[ti, b, 1])), repr(g), method])


def write_limitlaw_csv(path: str, table: LimitLawTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "k", "G", "method", "est_error"])
        for tau, k, g, method, err in table.rows():
            w.writerow([repr(float(tau)), k, repr(g), method, repr(err)])


def write_as_csv(path: str, rows: list[AlmostSureRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k_index", "n_k", "r_upper", "s_lower",
                    "viol_upper_freq", "viol_lower_freq", "ci_lo", "ci_hi"])
        for row in rows:
            lo, hi = row.upper_ci()
            w.writerow([row.k_index, row.n_k, repr(row.r_upper), repr(row.s_lower),
                        repr(row.upper_freq), repr(row.lower_freq),
                        repr(lo), repr(hi)])


def write_a2_csv(path: str, report: AssumptionReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "r", "mu_hat", "ci_lo", "ci_hi", "oracle_if_any"])
        for row in report.rows:
            w.writerow([row.j, repr(row.r), repr(row.mu_hat), repr(row.ci_lo),
                        repr(row.ci_hi),
                        "" if row.oracle is None else repr(row.oracle)])
