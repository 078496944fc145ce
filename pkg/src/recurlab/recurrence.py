"""Counting processes along a single orbit.

recurrence_count tallies R_n(r, x) = #{1 <= j <= n : d(f^j x, x) <= r} for a
whole ascending radius grid in one orbit pass; min_distance_process tracks
m_j = min_{k<=j} d(f^k x, x); hitting_count targets a fixed ball instead of
the initial point; max_psi_process evaluates the extreme-value transform
psi(m_n).

Closed-ball convention throughout: distances within 2^-slack of a radius are
resolved as hits and tallied in `ties` so the convention stays auditable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._fixedpoint import (
    fixed_to_float,
    float_to_fixed,
    make_stepper,
    radius_threshold,
)
from .errors import PrecisionAbort
from .maps import MapModel
from .orbit import (
    DyadicStream,
    FixedReal,
    PrecisionPolicy,
    dyadic_window,
    required_bits,
)


def _coerce_fixed(x0, bits: int):
    """x0 (float or FixedReal) as an integer at `bits` fractional bits."""
    if isinstance(x0, FixedReal):
        if bits >= x0.bits:
            return x0.raw << (bits - x0.bits)
        return x0.raw >> (x0.bits - bits)
    return float_to_fixed(float(x0), bits)


@dataclass
class RecurrenceSeries:
    """Per-orbit record of recurrence counts across a radius grid."""

    n: int
    radii: tuple[float, ...]
    counts: np.ndarray
    ties: int = 0
    hit_times: Optional[list] = None          # per-radius lists of j
    min_distance: Optional[np.ndarray] = None
    checkpoints: Optional[tuple[int, ...]] = None

    @property
    def tau_grid(self) -> np.ndarray:
        return np.asarray(self.radii) * (2.0 * self.n)

    def validate(self) -> None:
        c = np.asarray(self.counts)
        if np.any(np.diff(c) < 0):
            raise AssertionError("counts must be nondecreasing in the radius")
        if self.min_distance is not None and np.any(np.diff(self.min_distance) > 0):
            raise AssertionError("min distances must be nonincreasing")


@dataclass(frozen=True)
class PsiSpec:
    """A decreasing observable of the return distance, with its scaling.

    kind "neglog": psi(z) = -ln z, a_n = 1, b_n = ln(2n), tau(u) = e^-u.
    kind "power":  psi(z) = z^-alpha, a_n = (2n)^-alpha, b_n = 0,
                   tau(u) = u^(-1/alpha).
    """

    kind: str = "neglog"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("neglog", "power"):
            raise ValueError("psi kind must be 'neglog' or 'power'")
        if self.kind == "power" and self.alpha <= 0:
            raise ValueError("power exponent must be positive")

    def psi(self, z: float) -> float:
        if z <= 0.0:
            return math.inf
        if self.kind == "neglog":
            return -math.log(z)
        return z ** (-self.alpha)

    def a_n(self, n: int) -> float:
        return 1.0 if self.kind == "neglog" else (2.0 * n) ** (-self.alpha)

    def b_n(self, n: int) -> float:
        return math.log(2.0 * n) if self.kind == "neglog" else 0.0

    def tau_of_u(self, u: float) -> float:
        if self.kind == "neglog":
            return math.exp(-u)
        if u <= 0.0:
            raise ValueError("power-psi levels must be positive")
        return u ** (-1.0 / self.alpha)


def _auto_policy(m: MapModel, policy: Optional[PrecisionPolicy]) -> PrecisionPolicy:
    if policy is not None:
        return policy
    if m.kind == "doubling":
        return PrecisionPolicy(kind="dyadic")
    return PrecisionPolicy(kind="bigfixed")


def _as_stream(m: MapModel, x0, n: int, slack: int) -> DyadicStream:
    if isinstance(x0, DyadicStream):
        if x0.length < n + slack:
            raise ValueError("stream too short for the requested horizon")
        return x0
    return DyadicStream.from_float(float(x0), max(n + slack, 64))


def recurrence_count(m: MapModel, x0, n: int, radii: Sequence[float],
                     policy: Optional[PrecisionPolicy] = None,
                     record_hit_times: bool = False) -> RecurrenceSeries:
    """Count returns of the orbit of x0 within each radius (ascending grid)."""
    radii = tuple(float(r) for r in radii)
    if not radii:
        raise ValueError("radii must be non-empty")
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be sorted ascending")
    policy = _auto_policy(m, policy)
    if policy.kind == "dyadic":
        return _dyadic_recurrence(m, x0, n, radii, policy, record_hit_times)
    if policy.kind == "hardware":
        return _hardware_recurrence(m, x0, n, radii, policy, record_hit_times)
    return _fixed_recurrence(m, x0, n, radii, policy, record_hit_times)


def _dyadic_recurrence(m, x0, n, radii, policy, record_hit_times) -> RecurrenceSeries:
    if m.kind != "doubling":
        raise ValueError("dyadic backend requires the doubling map")
    slack = policy.slack_bits
    stream = _as_stream(m, x0, n, slack)
    L = stream.length
    w = 64
    thr_fracs = []
    thr64 = []
    for r in radii:
        f = Fraction(r)
        r64 = (f.numerator << 64) // f.denominator
        thr64.append(r64)
        thr_fracs.append(Fraction(r64 + 1, 1 << 64))
    counts = np.zeros(len(radii), dtype=np.int64)
    hits = [[] for _ in radii] if record_hit_times else None
    ties = 0
    W0 = dyadic_window(stream, 0, w)
    f0 = stream.to_fraction()
    for j in range(1, n + 1):
        Wj = dyadic_window(stream, j, w)
        dif = abs(Wj - W0)
        if dif > thr64[-1] + 1:
            continue
        d = abs(stream.shifted_fraction(j) - f0)
        for t, thr in enumerate(thr_fracs):
            if d <= thr:
                counts[t] += 1
                if hits is not None:
                    hits[t].append(j)
            if abs(d - thr) * (1 << 64) <= 1:
                ties += 1
    return RecurrenceSeries(n, radii, counts, ties=ties, hit_times=hits)


def _fixed_recurrence(m, x0, n, radii, policy, record_hit_times) -> RecurrenceSeries:
    bits = policy.bits or required_bits(m, n, policy.slack_bits).bits_required
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    X0 = _coerce_fixed(x0, bits)
    thrs = [radius_threshold(r, bits, policy.slack_bits) for r in radii]
    tie_w = 1 << (bits - policy.slack_bits)
    counts = np.zeros(len(radii), dtype=np.int64)
    hits = [[] for _ in radii] if record_hit_times else None
    ties = 0
    X = X0
    cum = mincum = 0.0
    const_ld = math.log2(m.lam) if m.expansion == "uniform" else None
    abort_log2 = math.log2(min(radii) * policy.abort_fraction) if min(radii) > 0 \
        else -math.inf
    for j in range(1, n + 1):
        ld = const_ld if const_ld is not None else stepper.log2_deriv(X)
        cum += ld
        mincum = min(mincum, cum)
        est = -bits + math.log2(1.0 + stepper.ulp * j) + (cum - mincum)
        if est > abort_log2 and min(radii) > 0:
            raise PrecisionAbort(j, 2.0**est, 2.0**abort_log2)
        X = stepper.step(X)
        d = X - X0
        if d < 0:
            d = -d
        for t, thr in enumerate(thrs):
            if d <= thr:
                counts[t] += 1
                if hits is not None:
                    hits[t].append(j)
                if d + tie_w >= thr:
                    ties += 1
            elif d <= thr + tie_w:
                ties += 1
    return RecurrenceSeries(n, radii, counts, ties=ties, hit_times=hits)


def _hardware_recurrence(m, x0, n, radii, policy, record_hit_times) -> RecurrenceSeries:
    from .maps import eval_map, map_derivative

    lo, hi = m.domain
    x = float(x0)
    counts = np.zeros(len(radii), dtype=np.int64)
    hits = [[] for _ in radii] if record_hit_times else None
    cum = mincum = 0.0
    abort_log2 = math.log2(min(radii) * policy.abort_fraction) if min(radii) > 0 \
        else -math.inf
    for j in range(1, n + 1):
        der = map_derivative(m, x)
        cum += math.log2(der) if der > 0 and math.isfinite(der) else 60.0
        mincum = min(mincum, cum)
        if -52.0 + math.log2(1.0 + j) + (cum - mincum) > abort_log2:
            raise PrecisionAbort(j, 0.0, 2.0**abort_log2)
        x = min(max(float(eval_map(m, x)), lo), hi)
        d = abs(x - float(x0))
        for t, r in enumerate(radii):
            if d <= r:
                counts[t] += 1
                if hits is not None:
                    hits[t].append(j)
    return RecurrenceSeries(n, radii, counts, hit_times=hits)


def min_distance_process(m: MapModel, x0, n: int, checkpoints: Sequence[int],
                         policy: Optional[PrecisionPolicy] = None) -> np.ndarray:
    """m_c = min_{k <= c} d(f^k x0, x0) at each checkpoint (ascending)."""
    checkpoints = [int(c) for c in checkpoints]
    if not checkpoints or checkpoints != sorted(checkpoints):
        raise ValueError("checkpoints must be a sorted non-empty list")
    if checkpoints[-1] > n or checkpoints[0] < 1:
        raise ValueError("checkpoints must lie in [1, n]")
    policy = _auto_policy(m, policy)
    out = np.empty(len(checkpoints))
    ck = {c: i for i, c in enumerate(checkpoints)}

    if policy.kind == "dyadic":
        stream = _as_stream(m, x0, n, policy.slack_bits)
        f0 = stream.to_fraction()
        best: Optional[Fraction] = None
        for j in range(1, n + 1):
            d = abs(stream.shifted_fraction(j) - f0)
            if best is None or d < best:
                best = d
            if j in ck:
                out[ck[j]] = float(best)
        return out

    if policy.kind == "hardware":
        from .maps import eval_map
        lo, hi = m.domain
        x = float(x0)
        best = math.inf
        for j in range(1, n + 1):
            x = min(max(float(eval_map(m, x)), lo), hi)
            best = min(best, abs(x - float(x0)))
            if j in ck:
                out[ck[j]] = best
        return out

    bits = policy.bits or required_bits(m, n, policy.slack_bits).bits_required
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    X0 = _coerce_fixed(x0, bits)
    X = X0
    bestI = None
    for j in range(1, n + 1):
        X = stepper.step(X)
        d = X - X0
        if d < 0:
            d = -d
        if bestI is None or d < bestI:
            bestI = d
        if j in ck:
            out[ck[j]] = fixed_to_float(bestI, bits)
    return out


def hitting_count(m: MapModel, x0, n: int, center: float, r: float,
                  policy: Optional[PrecisionPolicy] = None) -> int:
    """N_n(B(center, r), x0): orbit entries into the closed ball (j = 1..n)."""
    lo, hi = m.domain
    if not (lo <= center <= hi):
        raise ValueError("center must lie in the domain")
    policy = _auto_policy(m, policy)

    if policy.kind == "dyadic":
        stream = _as_stream(m, x0, n, policy.slack_bits)
        zeta = Fraction(center)
        f = Fraction(r)
        thr = Fraction(((f.numerator << 64) // f.denominator) + 1, 1 << 64)
        return sum(
            1 for j in range(1, n + 1)
            if abs(stream.shifted_fraction(j) - zeta) <= thr
        )

    bits = policy.bits or required_bits(m, n, policy.slack_bits).bits_required
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    X = _coerce_fixed(x0, bits)
    Z = float_to_fixed(float(center), bits)
    thr = radius_threshold(r, bits, policy.slack_bits)
    count = 0
    for j in range(1, n + 1):
        X = stepper.step(X)
        d = X - Z
        if d < 0:
            d = -d
        if d <= thr:
            count += 1
    return count


def max_psi_process(m: MapModel, x0, n: int, psi: PsiSpec,
                    policy: Optional[PrecisionPolicy] = None) -> float:
    """max_{1<=k<=n} psi(d(f^k x0, x0)) = psi(m_n), since psi is decreasing.

    Returns +inf when m_n = 0 and psi is unbounded at 0 (periodic x0).
    """
    m_n = float(min_distance_process(m, x0, n, [n], policy)[0])
    return psi.psi(m_n)
