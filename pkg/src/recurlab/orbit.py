"""Orbit iteration with controlled precision.

Three backends: float64 ("hardware"), big fixed-point integers ("bigfixed"),
and the exact bit-shift representation for the doubling map ("dyadic").
Rather than silently drifting, iteration tracks an error estimate and aborts
once distances at the smallest radius of interest become untrustworthy:
hardware doubles collapse the doubling map to 0 in 53 steps, so recurrence
statistics without this contract would be garbage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

import numpy as np

from ._fixedpoint import fixed_to_float, float_to_fixed, make_stepper
from ._rng import PURPOSE_PROBE, philox_key, sample_generator
from .errors import DomainError, PrecisionAbort
from .maps import (
    MapModel,
    eval_map,
    eval_map_batch,
    map_derivative,
    sample_invariant_batch,
)

DEFAULT_SLACK_BITS = 64
DEFAULT_ABORT_FRACTION = 0.125
LYAPUNOV_PROBE_STEPS = 10_000
LYAPUNOV_PROBE_BURN = 1_000


@dataclass(frozen=True)
class PrecisionPolicy:
    """How orbits are represented.

    kind "bigfixed" with bits=0 sizes the representation from required_bits;
    "dyadic" is valid only for the doubling map.
    """

    kind: str = "bigfixed"          # "hardware" | "bigfixed" | "dyadic"
    bits: int = 0
    slack_bits: int = DEFAULT_SLACK_BITS
    abort_fraction: float = DEFAULT_ABORT_FRACTION

    def __post_init__(self):
        if self.kind not in ("hardware", "bigfixed", "dyadic"):
            raise ValueError(f"unknown precision kind {self.kind!r}")
        if self.kind == "bigfixed" and self.bits and self.bits < 128:
            raise ValueError("bigfixed needs at least 128 bits")


@dataclass(frozen=True)
class OrbitBudget:
    """Bit budget for n steps of a map."""

    n: int
    bits_required: int
    guaranteed_abs_error: Optional[float]   # None when best-effort
    best_effort: bool
    lyapunov_estimate: Optional[float] = None

    @property
    def guaranteed(self) -> bool:
        return not self.best_effort


def estimate_lyapunov(m: MapModel, steps: int = LYAPUNOV_PROBE_STEPS,
                      burn: int = LYAPUNOV_PROBE_BURN) -> float:
    """Average of ln|f'| along a hardware-precision probe orbit (nats).

    Deterministic: the probe seed is fixed. Pseudo-orbit roundoff does not
    bias this time average at the accuracy the bit budget needs.
    """
    gen = sample_generator(philox_key(0, PURPOSE_PROBE), 0)
    x = sample_invariant_batch(m, gen, 1, burn_in=1000)
    x = eval_map_batch(m, x)
    for _ in range(burn):
        x = eval_map_batch(m, x)
    acc = 0.0
    xv = float(x[0])
    lo, hi = m.domain
    for _ in range(steps):
        d = map_derivative(m, xv)
        if math.isfinite(d) and d > 0:
            acc += math.log(d)
        xv = min(max(float(eval_map(m, xv)), lo), hi)
    return acc / steps


def required_bits(m: MapModel, n: int, slack_bits: int = DEFAULT_SLACK_BITS) -> OrbitBudget:
    """Bit budget so that n-step orbit values carry ~slack_bits true bits.

    Uniformly expanding maps get a certified budget ceil(n*log2(lam)) + slack;
    the rest get ceil(n*lyap/ln2) + 4*slack from a probe estimate, flagged
    best-effort (the runtime monitor still guards actual runs).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if m.expansion == "uniform":
        bits = math.ceil(n * math.log2(m.lam)) + slack_bits
        if m.kind == "doubling":
            err = 0.0        # shifts are exact
        else:
            # ulp * (lam^n - 1)/(lam - 1) in absolute units, computed in log2
            log2e = math.log2(4.0) - bits + n * math.log2(m.lam) - math.log2(m.lam - 1.0)
            err = 2.0 ** min(log2e, 0.0)
        return OrbitBudget(n, bits, err, best_effort=False)
    lam = estimate_lyapunov(m)
    bits = math.ceil(n * lam / math.log(2.0)) + 4 * slack_bits
    return OrbitBudget(n, bits, None, best_effort=True, lyapunov_estimate=lam)


class FixedReal(NamedTuple):
    """A fixed-point orbit value exposed to observers without rounding."""

    raw: int
    bits: int

    def __float__(self) -> float:
        return fixed_to_float(self.raw, self.bits)

    def to_fraction(self) -> Fraction:
        return Fraction(int(self.raw), 1 << self.bits)


class ErrorMonitor:
    """Running bound on orbit error: initial ulp plus per-step truncations,
    each amplified by the worst subsequent expansion window."""

    __slots__ = ("base", "cum", "mincum", "ulp", "abort_log2", "fraction")

    def __init__(self, bits: int, ulp: float, min_radius: Optional[float],
                 abort_fraction: float):
        self.base = -float(bits)
        self.cum = 0.0
        self.mincum = 0.0
        self.ulp = max(ulp, 1.0)
        self.fraction = abort_fraction
        self.abort_log2 = (
            math.log2(min_radius * abort_fraction) if min_radius else math.inf
        )

    def update(self, log2_deriv: float, j: int) -> None:
        self.cum += log2_deriv
        if self.cum < self.mincum:
            self.mincum = self.cum
        est = self.base + math.log2(1.0 + self.ulp * j) + (self.cum - self.mincum)
        if est > self.abort_log2:
            raise PrecisionAbort(j, 2.0 ** est, 2.0 ** self.abort_log2)

    def estimate_log2(self, j: int) -> float:
        return self.base + math.log2(1.0 + self.ulp * j) + (self.cum - self.mincum)


def _resolve_bits(m: MapModel, n: int, policy: PrecisionPolicy) -> int:
    if policy.bits:
        return policy.bits
    return required_bits(m, n, policy.slack_bits).bits_required


def iterate_stream(m: MapModel, x0, n: int, policy: PrecisionPolicy,
                   observer: Callable[[int, object], None],
                   min_radius: Optional[float] = None):
    """Emit (j, x_j) for j = 1..n and return the final state.

    Observers receive FixedReal values for the exact/bigfixed backends and
    plain floats for the hardware backend; values always lie in the closed
    domain. Raises PrecisionAbort (with the step index) once the error
    estimate crosses min_radius * abort_fraction.
    """
    lo, hi = m.domain
    if not (lo <= float(x0) <= hi):
        raise DomainError(f"x0={x0} outside [{lo}, {hi}]")

    if policy.kind == "hardware":
        x = float(x0)
        mon = ErrorMonitor(52, 1.0, min_radius, policy.abort_fraction)
        for j in range(1, n + 1):
            d = map_derivative(m, x)
            x = min(max(float(eval_map(m, x)), lo), hi)
            mon.update(math.log2(d) if d > 0 and math.isfinite(d) else 60.0, j)
            observer(j, x)
        return x

    if policy.kind == "dyadic":
        if m.kind != "doubling":
            raise ValueError("the exact dyadic backend only models the doubling map")
        bits = policy.bits or (n + policy.slack_bits)
        X = float_to_fixed(float(x0), bits) if not isinstance(x0, FixedReal) else x0.raw
        one = 1 << bits
        for j in range(1, n + 1):
            X <<= 1
            if X >= one:
                X -= one
            observer(j, FixedReal(int(X), bits))
        return FixedReal(int(X), bits)

    bits = _resolve_bits(m, n, policy)
    stepper = make_stepper(m, bits)
    bits = stepper.bits
    if isinstance(x0, FixedReal):
        X = x0.raw << (bits - x0.bits) if bits >= x0.bits else x0.raw >> (x0.bits - bits)
    else:
        X = float_to_fixed(float(x0), bits)
    mon = ErrorMonitor(bits, stepper.ulp, min_radius, policy.abort_fraction)
    constant_ld = math.log2(m.lam) if stepper.guaranteed else None
    for j in range(1, n + 1):
        ld = constant_ld if constant_ld is not None else stepper.log2_deriv(X)
        X = stepper.step(X)
        mon.update(ld, j)
        observer(j, FixedReal(int(X), bits))
    return FixedReal(int(X), bits)


# ---------------------------------------------------------------------------
# dyadic bitstreams (fast path for the doubling map)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicStream:
    """A finite binary expansion 0.b_1 b_2 ... b_length."""

    value: int          # the bits, MSB = first fractional bit
    length: int

    @classmethod
    def from_float(cls, x: float, length: Optional[int] = None) -> "DyadicStream":
        if not 0.0 <= x < 1.0:
            raise DomainError("dyadic streams represent points of [0,1)")
        f = Fraction(x)
        exact_len = (f.denominator - 1).bit_length()
        length = length or max(exact_len, 64)
        if length < exact_len:
            raise ValueError("length too small to hold the expansion exactly")
        return cls((f.numerator << length) // f.denominator, length)

    @classmethod
    def from_words(cls, words: np.ndarray) -> "DyadicStream":
        value = 0
        for w in np.asarray(words, dtype=np.uint64).tolist():
            value = (value << 64) | int(w)
        return cls(value, 64 * len(words))

    def to_fraction(self) -> Fraction:
        return Fraction(self.value, 1 << self.length)

    def shifted_fraction(self, j: int) -> Fraction:
        """f^j(x) for the doubling map, exactly (remaining bits after j shifts)."""
        if j > self.length:
            raise IndexError("shift exhausts the stream")
        rem = self.length - j
        mask = (1 << rem) - 1
        return Fraction(self.value & mask, 1 << rem)


def dyadic_window(stream: DyadicStream, offset: int, width: int) -> int:
    """Bits offset..offset+width-1 of the stream as an unsigned integer.

    Window at offset j equals the width-bit truncation of f^j(x) under the
    doubling map. Distances |f^j x - x| <= r are screened by comparing
    windows at offsets j and 0: a gap above ceil(r*2^width)+1 rules a hit
    out, anything closer is confirmed at full precision.
    """
    if offset < 0 or width <= 0 or offset + width > stream.length:
        raise IndexError(
            f"window [{offset}, {offset + width}) out of range for length {stream.length}"
        )
    shift = stream.length - offset - width
    return (stream.value >> shift) & ((1 << width) - 1)
