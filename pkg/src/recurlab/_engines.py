"""Batch orbit engines behind the Monte Carlo experiments.

The doubling map runs fully vectorized: every sample is a packed random
bitstream and f^j is a one-bit shift, so a 64-bit sliding window per sample
decides d(f^j x, x) <= r for all samples in lockstep. Hit decisions follow
the shared convention d <= (floor(r*2^64)+1)/2^64; window gaps equal to the
threshold exactly are re-resolved at full precision (they flag `suspects`).

The remaining maps run per-sample fixed-point loops (see _fixedpoint) with a
running error monitor that aborts rather than emit untrustworthy distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._fixedpoint import make_stepper, radius_threshold, sample_fixed
from ._rng import bit_matrix, sample_generator
from .errors import PrecisionAbort
from .maps import MapModel

_U64 = np.uint64


def radius_to_r64(r: float) -> int:
    """floor(r * 2^64) from the exact dyadic value of the float r."""
    f = Fraction(r)
    return (f.numerator << 64) // f.denominator


def _feed_bit(words: np.ndarray, b: int) -> np.ndarray:
    """Bit b (0-based from the binary point) of every sample, as uint64."""
    return (words[:, b >> 6] >> _U64(63 - (b & 63))) & _U64(1)


@dataclass
class DoublingBatchResult:
    counts: np.ndarray              # (samples, n_radii) int64
    ties: np.ndarray                # per-radius counts of near-threshold samples
    suspects: np.ndarray            # sample indices needing exact re-resolution
    words: np.ndarray               # the bitstreams (for exact recounts)


def doubling_recurrence_batch(key: np.ndarray, first: int, count: int, n: int,
                              r64s: Sequence[int]) -> DoublingBatchResult:
    """Recurrence counts for `count` doubling orbits at every radius, one pass."""
    wpr = (n + 64) // 64 + 1
    words = bit_matrix(key, first, count, wpr)
    W0 = words[:, 0].copy()
    W = W0.copy()
    T = len(r64s)
    counts = np.zeros((count, T), dtype=np.int64)
    near = [np.zeros(count, dtype=bool) for _ in range(T)]
    thr = [_U64(min(r + 1, 2**64 - 1)) for r in r64s]
    base = [_U64(r) for r in r64s]
    two = _U64(2)
    one = _U64(1)
    for j in range(1, n + 1):
        b = j + 63
        W = (W << one) | _feed_bit(words, b)
        d = W - W0
        dif = np.minimum(d, _U64(0) - d)
        for t in range(T):
            counts[:, t] += dif <= thr[t]
            near[t] |= (dif - base[t]) <= two
    ties = np.array([m.sum() for m in near], dtype=np.int64)
    suspect = near[0]
    for m in near[1:]:
        suspect = suspect | m
    return DoublingBatchResult(counts, ties, np.nonzero(suspect)[0], words)


def doubling_exact_count(words_row: np.ndarray, n: int, r64s: Sequence[int]) -> np.ndarray:
    """Exact recount of one doubling orbit straight from its bitstream."""
    L = 64 * len(words_row)
    value = 0
    for w in words_row.tolist():
        value = (value << 64) | int(w)
    counts = np.zeros(len(r64s), dtype=np.int64)
    thrs = [Fraction(r + 1, 1 << 64) for r in r64s]
    f0 = Fraction(value, 1 << L)
    for j in range(1, n + 1):
        rem = L - j
        fj = Fraction(value & ((1 << rem) - 1), 1 << rem)
        d = abs(fj - f0)
        for t, thr in enumerate(thrs):
            if d <= thr:
                counts[t] += 1
    return counts


def doubling_min_batch(key: np.ndarray, first: int, count: int,
                       checkpoints: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Running-minimum window distances at the given checkpoint steps.

    Returns (minD, words): minD[s, k] = min_{j <= c_k} |window_j - window_0|
    (uint64). True min distance lies within 2^-64 of minD/2^64.
    """
    n = int(checkpoints[-1])
    wpr = (n + 64) // 64 + 1
    words = bit_matrix(key, first, count, wpr)
    W0 = words[:, 0].copy()
    W = W0.copy()
    minD = np.full(count, np.iinfo(np.uint64).max, dtype=np.uint64)
    out = np.empty((count, len(checkpoints)), dtype=np.uint64)
    ck = {int(c): i for i, c in enumerate(checkpoints)}
    one = _U64(1)
    for j in range(1, n + 1):
        W = (W << one) | _feed_bit(words, j + 63)
        d = W - W0
        np.minimum(minD, np.minimum(d, _U64(0) - d), out=minD)
        if j in ck:
            out[:, ck[j]] = minD
    return out, words


# ---------------------------------------------------------------------------
# fixed-point batch engine (beta, cusp, mp, gauss, logistic)
# ---------------------------------------------------------------------------

@dataclass
class FixedBatchResult:
    counts: np.ndarray              # (samples, n_radii) int64; aborted rows = -1
    ties: np.ndarray
    aborted: np.ndarray             # bool per sample
    abort_steps: list


def fixed_recurrence_batch(m: MapModel, key: np.ndarray, first: int, count: int,
                           n: int, radii: Sequence[float], bits: int,
                           slack_bits: int = 64, abort_fraction: float = 0.125,
                           burn_in: int = 10_000,
                           guaranteed: Optional[bool] = None) -> FixedBatchResult:
    """Recurrence counts from per-sample fixed-point orbits."""
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    thrs = [radius_threshold(r, bits, slack_bits) for r in radii]
    thr_max = thrs[-1]
    tie_w = 1 << (bits - slack_bits)
    thr_max_tie = thr_max + tie_w
    T = len(radii)
    counts = np.zeros((count, T), dtype=np.int64)
    ties = np.zeros(T, dtype=np.int64)
    aborted = np.zeros(count, dtype=bool)
    abort_steps = []

    if guaranteed is None:
        guaranteed = stepper.guaranteed and _static_budget_ok(
            m, stepper, n, bits, min(radii), abort_fraction)
    abort_log2 = math.log2(min(radii) * abort_fraction)
    log1p_tab = None
    if not guaranteed:
        log1p_tab = [math.log2(1.0 + stepper.ulp * j) for j in range(n + 1)]
    const_ld = math.log2(m.lam) if m.expansion == "uniform" else None
    step = stepper.step
    ld_fn = stepper.log2_deriv

    for i in range(count):
        gen = sample_generator(key, first + i)
        X0 = sample_fixed(m, gen, bits, burn_in=burn_in)
        X = X0
        row = counts[i]
        cum = 0.0
        mincum = 0.0
        base = -float(bits)
        try:
            for j in range(1, n + 1):
                if not guaranteed:
                    ld = const_ld if const_ld is not None else ld_fn(X)
                    cum += ld
                    if cum < mincum:
                        mincum = cum
                    if base + log1p_tab[j] + (cum - mincum) > abort_log2:
                        raise PrecisionAbort(j, 0.0, 0.0)
                X = step(X)
                d = X - X0
                if d < 0:
                    d = -d
                if d <= thr_max_tie:
                    for t in range(T):
                        if d <= thrs[t]:
                            row[t] += 1
                            if d + tie_w >= thrs[t]:
                                ties[t] += 1
                        elif d <= thrs[t] + tie_w:
                            ties[t] += 1
        except PrecisionAbort as exc:
            aborted[i] = True
            abort_steps.append((first + i, exc.step))
            row[:] = -1
    return FixedBatchResult(counts, ties, aborted, abort_steps)


def _static_budget_ok(m: MapModel, stepper, n: int, bits: int,
                      r_min: float, abort_fraction: float) -> bool:
    est = (-bits + math.log2(1.0 + max(stepper.ulp, 1.0) * n)
           + n * math.log2(m.lam))
    return est <= math.log2(r_min * abort_fraction)


def hardware_recurrence_batch(m: MapModel, key: np.ndarray, first: int, count: int,
                              n: int, radii: Sequence[float],
                              abort_fraction: float = 0.125,
                              burn_in: int = 10_000) -> FixedBatchResult:
    """float64 orbits with the same abort contract (negative-control backend)."""
    from .maps import eval_map, map_derivative, sample_invariant

    lo, hi = m.domain
    T = len(radii)
    counts = np.zeros((count, T), dtype=np.int64)
    ties = np.zeros(T, dtype=np.int64)
    aborted = np.zeros(count, dtype=bool)
    abort_steps = []
    abort_log2 = math.log2(min(radii) * abort_fraction)
    r_sorted = list(radii)
    for i in range(count):
        gen = sample_generator(key, first + i)
        x0 = sample_invariant(m, gen, burn_in=burn_in)
        x = x0
        cum = mincum = 0.0
        try:
            for j in range(1, n + 1):
                d = map_derivative(m, x)
                cum += math.log2(d) if d > 0 and math.isfinite(d) else 60.0
                if cum < mincum:
                    mincum = cum
                est = -52.0 + math.log2(1.0 + j) + (cum - mincum)
                if est > abort_log2:
                    raise PrecisionAbort(j, 2.0**est, 2.0**abort_log2)
                x = min(max(float(eval_map(m, x)), lo), hi)
                dist = abs(x - x0)
                for t in range(T):
                    if dist <= r_sorted[t]:
                        counts[i, t] += 1
        except PrecisionAbort as exc:
            aborted[i] = True
            abort_steps.append((first + i, exc.step))
            counts[i, :] = -1
    return FixedBatchResult(counts, ties, aborted, abort_steps)


def fixed_min_checkpoints(m: MapModel, key: np.ndarray, first: int, count: int,
                          checkpoints: Sequence[int], bits: int,
                          slack_bits: int = 64, abort_fraction: float = 0.125,
                          min_radius: Optional[float] = None,
                          burn_in: int = 10_000) -> tuple[list, np.ndarray]:
    """Exact running-min distances (as fixed-point ints) at checkpoints."""
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    n = int(checkpoints[-1])
    ck = {int(c): i for i, c in enumerate(checkpoints)}
    mins = [[None] * len(checkpoints) for _ in range(count)]
    aborted = np.zeros(count, dtype=bool)
    abort_log2 = math.log2(min_radius * abort_fraction) if min_radius else math.inf
    const_ld = math.log2(m.lam) if m.expansion == "uniform" else None
    monitor = not (stepper.guaranteed and min_radius is not None and
                   _static_budget_ok(m, stepper, n, bits, min_radius, abort_fraction))
    step = stepper.step
    ld_fn = stepper.log2_deriv
    for i in range(count):
        gen = sample_generator(key, first + i)
        X0 = sample_fixed(m, gen, bits, burn_in=burn_in)
        X = X0
        dmin = None
        cum = mincum = 0.0
        base = -float(bits)
        try:
            for j in range(1, n + 1):
                if monitor:
                    ld = const_ld if const_ld is not None else ld_fn(X)
                    cum += ld
                    if cum < mincum:
                        mincum = cum
                    if base + math.log2(1.0 + stepper.ulp * j) + (cum - mincum) > abort_log2:
                        raise PrecisionAbort(j, 0.0, 0.0)
                X = step(X)
                d = X - X0
                if d < 0:
                    d = -d
                if dmin is None or d < dmin:
                    dmin = d
                if j in ck:
                    mins[i][ck[j]] = dmin
        except PrecisionAbort:
            aborted[i] = True
    return mins, aborted
