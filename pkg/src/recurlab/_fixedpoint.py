"""Big fixed-point arithmetic backend.

Orbit values are integers X representing x = X / 2**bits. Every step floors,
so per-step truncation is a known number of ulps; combined with the map's
local expansion this gives a running error bound that the orbit engines
monitor. Doubling is exact in this representation; beta/cusp/mp/gauss/
logistic steps cost one big multiply and/or integer square root.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Optional

try:
    from gmpy2 import mpz, isqrt as _isqrt, iroot as _iroot

    def int_root(n, k):
        return int(_iroot(mpz(n), k)[0])

    HAVE_GMPY2 = True
except ImportError:                                       # pragma: no cover
    mpz = int
    _isqrt = math.isqrt
    HAVE_GMPY2 = False

    def int_root(n, k):
        if k == 2:
            return math.isqrt(n)
        x = 1 << (-(-n.bit_length() // k))
        while True:
            y = ((k - 1) * x + n // x ** (k - 1)) // k
            if y >= x:
                return x
            x = y

from .errors import DomainError
from .maps import MapModel


def fixed_sqrt5(bits: int):
    """sqrt(5) * 2**bits, floored."""
    return _isqrt(mpz(5) << (2 * bits))


def golden_fixed(bits: int):
    """ceil(golden ratio * 2**bits), exactly.

    The ceiling (rather than floor) makes beta*(beta-1) land at >= 1 so the
    mod-1 step resolves the algebraic identity beta^2 - beta = 1 to 0, not
    to 1 - ulp. beta*2^bits is irrational, so ceil = floor + 1.
    """
    return ((fixed_sqrt5(bits) + (mpz(1) << bits)) >> 1) + 1


def float_to_fixed(x: float, bits: int):
    """Exact dyadic conversion of a float (floor at `bits` fractional bits)."""
    f = Fraction(x)
    return (mpz(f.numerator) << bits) // f.denominator if f.numerator >= 0 else \
        -((mpz(-f.numerator) << bits) // f.denominator)


def fixed_to_float(X, bits: int) -> float:
    X = int(X)
    sign = -1.0 if X < 0 else 1.0
    X = abs(X)
    bl = X.bit_length()
    if bl <= 53:
        return sign * math.ldexp(X, -bits)
    return sign * math.ldexp(X >> (bl - 53), bl - 53 - bits)


def log2_fixed(X, bits: int) -> float:
    """log2 of |X|/2^bits for X != 0."""
    X = abs(int(X))
    bl = X.bit_length()
    if bl <= 53:
        return math.log2(X) - bits
    return math.log2(X >> (bl - 53)) + (bl - 53) - bits


def radius_threshold(r: float, bits: int, slack_bits: int = 64):
    """Integer hit threshold for radius r at the given precision.

    The decision rule everywhere is d <= (floor(r*2^slack)+1) / 2^slack, a
    fixed dyadic threshold within 2^-slack above r; near-threshold distances
    count as hits (and are tallied as ties by the callers).
    """
    if bits < slack_bits:
        raise ValueError("bits must be at least slack_bits")
    f = Fraction(r)
    r_slack = (f.numerator << slack_bits) // f.denominator
    return (mpz(r_slack) + 1) << (bits - slack_bits)


class FixedStepper:
    """One-step evaluator for a map at a fixed precision.

    Attributes
    ----------
    guaranteed : bool
        True when the per-step expansion has the uniform bound `lam`, so a
        static bit budget certifies the orbit and no runtime monitor is
        needed.
    ulp : float
        Additive truncation per step, in units of 2**-bits.
    """

    def __init__(self, m: MapModel, bits: int):
        self.map = m
        self.bits = bits
        self.one = mpz(1) << bits
        self.guaranteed = m.expansion == "uniform"
        self.ulp = 1.0
        kind = m.kind
        if kind == "doubling":
            self.ulp = 0.0
            self._step = self._step_doubling
            self.log2_deriv = None
        elif kind == "beta":
            self._beta = golden_fixed(bits) if m.beta_is_golden else \
                float_to_fixed(m.beta, bits)
            self.ulp = 2.0
            self._step = self._step_beta
            self.log2_deriv = None
        elif kind == "cusp":
            self.ulp = 2.0
            self._step = self._step_cusp
            self.log2_deriv = self._ld_cusp
        elif kind == "gauss":
            self.ulp = 1.0
            self._step = self._step_gauss
            self.log2_deriv = self._ld_gauss
        elif kind == "logistic":
            self.ulp = 1.0
            self._step = self._step_logistic
            self.log2_deriv = self._ld_logistic
        elif kind == "mp":
            self._setup_mp(m, bits)
            self.ulp = 4.0
            self.log2_deriv = self._ld_mp
        else:
            raise ValueError(kind)

    # -- steps ------------------------------------------------------------
    def _step_doubling(self, X):
        Y = X << 1
        return Y - self.one if Y >= self.one else Y

    def _step_beta(self, X):
        Y = (self._beta * X) >> self.bits
        return Y & (self.one - 1)

    def _step_cusp(self, X):
        return self.one - (_isqrt(abs(X) << self.bits) << 1)

    def _step_gauss(self, X):
        if X == 0:
            return X
        Q = (self.one << self.bits) // X
        return Q - ((Q >> self.bits) << self.bits)

    def _step_logistic(self, X):
        return (X * (self.one - X)) >> (self.bits - 2)

    def _setup_mp(self, m: MapModel, bits: int):
        g = Fraction(m.gamma).limit_denominator(16)
        if abs(float(g) - m.gamma) > 1e-15:
            raise ValueError(
                f"mp exponent {m.gamma} is not a small rational; "
                "use gamma = p/q with q <= 16 for the fixed-point engine"
            )
        if bits % g.denominator:
            raise ValueError(f"bits must be a multiple of {g.denominator} for gamma={g}")
        self._half = self.one >> 1
        # 2^gamma at `bits` fractional bits
        self._coef = mpz(int_root(mpz(2) << (g.denominator * bits), g.denominator))
        p, q = g.numerator, g.denominator
        if g == Fraction(1, 4):
            self._step = self._step_mp_quarter
        elif g == Fraction(1, 2):
            self._step = self._step_mp_half
        else:
            self._p, self._q = p, q
            self._step = self._step_mp_generic

    def _step_mp_quarter(self, X):
        if X < self._half:
            b = self.bits
            r = _isqrt(_isqrt(X << b) << b)          # x^(1/4)
            t = (X * r) >> b                          # x^(5/4)
            return X + ((self._coef * t) >> b)
        return (X << 1) - self.one

    def _step_mp_half(self, X):
        if X < self._half:
            b = self.bits
            t = (X * _isqrt(X << b)) >> b            # x^(3/2)
            return X + ((self._coef * t) >> b)
        return (X << 1) - self.one

    def _step_mp_generic(self, X):
        if X < self._half:
            b, p, q = self.bits, self._p, self._q
            t = mpz(int_root(X ** (p + q), q)) >> (b * p // q)   # x^(1+gamma)
            return X + ((self._coef * t) >> b)
        return (X << 1) - self.one

    def step(self, X):
        return self._step(X)

    # -- local expansion (log2 |f'|), for the best-effort monitor ----------
    def _ld_cusp(self, X) -> float:
        if X == 0:
            return math.inf
        return -0.5 * log2_fixed(X, self.bits)

    def _ld_gauss(self, X) -> float:
        if X == 0:
            return math.inf
        return -2.0 * log2_fixed(X, self.bits)

    def _ld_logistic(self, X) -> float:
        xf = fixed_to_float(X, self.bits)
        d = abs(4.0 - 8.0 * xf)
        return math.log2(d) if d > 0 else -math.inf

    def _ld_mp(self, X) -> float:
        if X >= self._half:
            return 1.0
        if X == 0:
            return 0.0
        g = self.map.gamma
        xg = 2.0 ** (g * log2_fixed(X, self.bits))
        return math.log2(1.0 + (1.0 + g) * 2.0**g * xg)


def make_stepper(m: MapModel, bits: int) -> FixedStepper:
    if m.kind == "mp":
        q = Fraction(m.gamma).limit_denominator(16).denominator
        bits += (-bits) % q
    return FixedStepper(m, bits)


def sample_fixed(m: MapModel, gen, bits: int, burn_in: int = 10_000,
                 uniform_fixed: Optional[Callable] = None):
    """Draw X0 ~ invariant measure as a fixed-point integer.

    Closed-form maps invert their CDF in integer arithmetic at full width;
    maps without one burn in a float64 uniform seed and promote the endpoint
    (exactly, as a dyadic rational).
    """
    from ._rng import uniform_fixed as _uf
    uf = uniform_fixed or _uf
    one = mpz(1) << bits
    kind = m.kind
    if kind == "doubling":
        return mpz(uf(gen, bits))
    if kind == "beta" and m.beta_is_golden:
        beta = golden_fixed(bits)
        b2 = (beta * beta) >> bits
        b3 = (b2 * beta) >> bits
        den = b2 + one
        rho1 = (b3 << bits) // den
        rho2 = (b2 << bits) // den
        cut = (one << bits) // beta
        mu1 = (rho1 * cut) >> bits
        U = mpz(uf(gen, bits))
        if U < mu1:
            return (U << bits) // rho1
        return cut + (((U - mu1) << bits) // rho2)
    if kind == "cusp":
        U = mpz(uf(gen, bits))
        return one - (_isqrt((one - U) << bits) << 1)
    if kind in ("mp", "beta", "logistic"):
        from .maps import iterate_hardware_batch
        import numpy as np
        x = iterate_hardware_batch(m, np.array([gen.random()]), burn_in)[0]
        if x <= 0.0 or x >= 1.0:
            x = 0.5    # measure-zero edge; restart from the interior
        return float_to_fixed(float(x), bits)
    if kind == "gauss":
        import mpmath
        with mpmath.workprec(bits + 16):
            u = mpmath.mpf(uf(gen, bits)) / (mpmath.mpf(2) ** bits)
            x = mpmath.mpf(2) ** u - 1
            return float_to_fixed_mp(x, bits)
    raise DomainError(f"no invariant sampler for {kind}")


def float_to_fixed_mp(x, bits: int):
    """mpmath.mpf -> fixed point (floor)."""
    import mpmath
    return mpz(int(mpmath.floor(x * (mpmath.mpf(2) ** bits))))
