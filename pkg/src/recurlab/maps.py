"""Catalog of interval maps with their invariant densities and samplers.

Six maps are supported, selected by the same keys the config file uses:

``doubling``   x -> 2x mod 1 on [0,1], Lebesgue invariant.
``beta``       x -> beta*x mod 1 on [0,1]; for the golden ratio parameter
               (beta^-1 = beta - 1) the invariant density is the explicit
               two-piece constant density.
``gauss``      x -> frac(1/x) on [0,1], density 1/((1+x) ln 2).
``mp``         the intermittent map x(1 + 2^g x^g) on [0,1/2), 2x-1 on
               [1/2,1], with exponent g in (0,1); density has no closed form.
``cusp``       x -> 1 - 2 sqrt(|x|) on [-1,1], density (1-x)/2.
``logistic``   x -> 4x(1-x) on [0,1]; the arcsine density is attached as a
               derived closed form and is cross-checked against the Ulam
               estimate rather than taken on faith.

Densities evaluate right-continuously at jump points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import mpmath
import numpy as np

from .errors import DomainError, UnsupportedDensityError

MAP_KINDS = ("doubling", "beta", "gauss", "mp", "cusp", "logistic")

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

_LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# density model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityPiece:
    """One smooth piece of a closed-form density on [lo, hi)."""

    lo: float
    hi: float
    form: str              # "const" | "affine" | "gauss_reciprocal" | "arcsine"
    params: tuple = ()

    def __call__(self, x):
        if self.form == "const":
            return self.params[0] + 0.0 * x
        if self.form == "affine":
            a, b = self.params
            return a + b * x
        if self.form == "gauss_reciprocal":
            return 1.0 / ((1.0 + x) * _LN2)
        if self.form == "arcsine":
            return 1.0 / (math.pi * np.sqrt(x * (1.0 - x)))
        raise ValueError(f"unknown density form {self.form!r}")


@dataclass(frozen=True)
class DensityModel:
    """Piecewise closed-form, Ulam-estimated, or histogram density.

    ``pieces`` is populated for kind "closed_form"; ``edges``/``weights``
    (bin masses summing to 1) for the discrete kinds. ``jump_points`` and
    ``zero_set`` record where quadrature panels must split.
    """

    kind: str                       # "closed_form" | "ulam" | "histogram" | "unknown"
    domain: tuple[float, float]
    pieces: tuple[DensityPiece, ...] = ()
    edges: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    jump_points: tuple[float, ...] = ()
    zero_set: tuple[float, ...] = ()
    label: str = ""

    def __call__(self, x: float) -> float:
        """Density value at x (right limit at jump points)."""
        lo, hi = self.domain
        if x < lo or x > hi:
            raise DomainError(f"{x} outside domain [{lo}, {hi}]")
        if self.kind == "unknown":
            raise UnsupportedDensityError(
                "no closed-form density for this map; estimate one with ulam_density"
            )
        if self.kind == "closed_form":
            for p in self.pieces:
                if p.lo <= x < p.hi:
                    return float(p(x))
            return float(self.pieces[-1](x))   # x == domain right endpoint
        # discrete: right-continuous step function
        edges, weights = self.edges, self.weights
        i = int(np.searchsorted(edges, x, side="right")) - 1
        i = min(max(i, 0), len(weights) - 1)
        return float(weights[i] / (edges[i + 1] - edges[i]))

    def left_limit(self, x: float) -> float:
        """Left limit of the density at x."""
        if self.kind == "closed_form":
            for p in self.pieces:
                if p.lo < x <= p.hi:
                    return float(p(x))
            return float(self.pieces[0](x))
        edges, weights = self.edges, self.weights
        i = int(np.searchsorted(edges, x, side="left")) - 1
        i = min(max(i, 0), len(weights) - 1)
        return float(weights[i] / (edges[i + 1] - edges[i]))

    def jump_value(self, x: float) -> float:
        """|right limit - left limit| at a recorded jump point."""
        return abs(self(x) - self.left_limit(x))

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("ulam", "histogram")

    def sup_value(self) -> float:
        """Supremum of the density (inf for the arcsine form)."""
        if self.kind == "unknown":
            raise UnsupportedDensityError("unknown density")
        if self.is_discrete:
            widths = np.diff(self.edges)
            return float(np.max(self.weights / widths))
        sup = 0.0
        for p in self.pieces:
            if p.form == "arcsine":
                return math.inf
            # const, affine and the Gauss reciprocal all attain their sup at an endpoint
            sup = max(sup, float(p(p.lo)), float(p(p.hi)))
        return sup

    def breakpoints(self) -> list[float]:
        """Sorted panel boundaries: piece edges, jumps and zero-set points."""
        lo, hi = self.domain
        pts = {lo, hi}
        for p in self.pieces:
            pts.add(p.lo)
            pts.add(p.hi)
        pts.update(self.jump_points)
        pts.update(self.zero_set)
        return sorted(x for x in pts if lo <= x <= hi)

    def integral(self) -> float:
        """Numerical check of the normalization (exact bin sum when discrete)."""
        if self.kind == "unknown":
            raise UnsupportedDensityError("unknown density")
        if self.is_discrete:
            return float(np.sum(self.weights))
        from scipy.integrate import quad

        total = 0.0
        bps = self.breakpoints()
        for a, b in zip(bps[:-1], bps[1:]):
            val, _ = quad(self, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)
            total += val
        return total


# ---------------------------------------------------------------------------
# map model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MapModel:
    """An interval map together with its expansion info and density descriptor."""

    kind: str
    domain: tuple[float, float]
    expansion: str                  # "uniform" | "unbounded"
    lam: Optional[float]            # uniform bound on |f'| when expansion == "uniform"
    density: DensityModel
    beta: Optional[float] = None
    beta_is_golden: bool = False
    gamma: Optional[float] = None

    def with_density(self, density: DensityModel) -> "MapModel":
        return replace(self, density=density)


def make_map(kind: str, beta: Optional[float] = None, gamma: Optional[float] = None) -> MapModel:
    """Build a MapModel from its config key and parameters."""
    if kind == "doubling":
        dens = DensityModel(
            kind="closed_form", domain=(0.0, 1.0),
            pieces=(DensityPiece(0.0, 1.0, "const", (1.0,)),),
            label="lebesgue",
        )
        return MapModel("doubling", (0.0, 1.0), "uniform", 2.0, dens)

    if kind == "beta":
        golden = beta is None or abs(beta - GOLDEN) < 1e-12
        b = GOLDEN if golden else float(beta)
        if b <= 1.0:
            raise ValueError("beta must exceed 1")
        if golden:
            rho1 = b**3 / (b**2 + 1.0)
            rho2 = b**2 / (b**2 + 1.0)
            cut = 1.0 / b
            dens = DensityModel(
                kind="closed_form", domain=(0.0, 1.0),
                pieces=(
                    DensityPiece(0.0, cut, "const", (rho1,)),
                    DensityPiece(cut, 1.0, "const", (rho2,)),
                ),
                jump_points=(cut,),
                label="beta_golden",
            )
        else:
            dens = DensityModel(kind="unknown", domain=(0.0, 1.0), label="beta_generic")
        return MapModel("beta", (0.0, 1.0), "uniform", b, dens,
                        beta=b, beta_is_golden=golden)

    if kind == "gauss":
        dens = DensityModel(
            kind="closed_form", domain=(0.0, 1.0),
            pieces=(DensityPiece(0.0, 1.0, "gauss_reciprocal"),),
            label="gauss",
        )
        return MapModel("gauss", (0.0, 1.0), "unbounded", None, dens)

    if kind == "mp":
        g = 0.5 if gamma is None else float(gamma)
        if not 0.0 < g < 1.0:
            raise ValueError("mp exponent gamma must lie in (0,1)")
        dens = DensityModel(kind="unknown", domain=(0.0, 1.0), label="mp")
        return MapModel("mp", (0.0, 1.0), "unbounded", None, dens, gamma=g)

    if kind == "cusp":
        dens = DensityModel(
            kind="closed_form", domain=(-1.0, 1.0),
            pieces=(DensityPiece(-1.0, 1.0, "affine", (0.5, -0.5)),),
            zero_set=(1.0,),
            label="cusp",
        )
        return MapModel("cusp", (-1.0, 1.0), "unbounded", None, dens)

    if kind == "logistic":
        # arcsine form is derived, not asserted: tests cross-check it via Ulam
        dens = DensityModel(
            kind="closed_form", domain=(0.0, 1.0),
            pieces=(DensityPiece(0.0, 1.0, "arcsine"),),
            label="arcsine",
        )
        return MapModel("logistic", (0.0, 1.0), "uniform", 4.0, dens)

    raise ValueError(f"unknown map kind {kind!r}; expected one of {MAP_KINDS}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _beta_value(m: MapModel, like):
    """beta at the working precision of `like` (mpf input regenerates golden)."""
    if isinstance(like, mpmath.mpf) and m.beta_is_golden:
        return (1 + mpmath.sqrt(5)) / 2
    return m.beta


def eval_map(m: MapModel, x):
    """Apply the map once.

    Accepts float or mpmath.mpf and returns the same type; mod-1 maps reduce
    into [0,1). Raises DomainError for x outside the domain.
    """
    lo, hi = m.domain
    if not (lo <= x <= hi):
        raise DomainError(f"{x} outside domain [{lo}, {hi}]")
    mp_in = isinstance(x, mpmath.mpf)

    if m.kind == "doubling":
        y = 2 * x
        return y - mpmath.floor(y) if mp_in else y % 1.0

    if m.kind == "beta":
        y = _beta_value(m, x) * x
        return y - mpmath.floor(y) if mp_in else y % 1.0

    if m.kind == "gauss":
        if x == 0:
            return x * 0          # fixed point convention at the endpoint
        y = 1 / x
        return y - mpmath.floor(y) if mp_in else y % 1.0

    if m.kind == "mp":
        g = m.gamma
        if x < 0.5:
            return x * (1 + 2**mpmath.mpf(g) * x**mpmath.mpf(g)) if mp_in \
                else x * (1.0 + 2.0**g * x**g)
        return 2 * x - 1

    if m.kind == "cusp":
        s = mpmath.sqrt(abs(x)) if mp_in else math.sqrt(abs(x))
        return 1 - 2 * s

    if m.kind == "logistic":
        return 4 * x * (1 - x)

    raise ValueError(m.kind)


def map_derivative(m: MapModel, x: float) -> float:
    """|f'(x)| at hardware precision (used by Lyapunov probes and monitors)."""
    if m.kind == "doubling":
        return 2.0
    if m.kind == "beta":
        return m.beta
    if m.kind == "gauss":
        return 1.0 / (x * x) if x > 0 else math.inf
    if m.kind == "mp":
        g = m.gamma
        if x < 0.5:
            return 1.0 + (1.0 + g) * 2.0**g * x**g
        return 2.0
    if m.kind == "cusp":
        ax = abs(x)
        return ax**-0.5 if ax > 0 else math.inf
    if m.kind == "logistic":
        return abs(4.0 - 8.0 * x)
    raise ValueError(m.kind)


def eval_density(m: MapModel, x: float) -> float:
    """Invariant density at x (right-continuous at jump points)."""
    return m.density(x)


# ---------------------------------------------------------------------------
# invariant CDFs and sampling
# ---------------------------------------------------------------------------

def invariant_cdf(m: MapModel, x):
    """Closed-form CDF of the invariant measure; vectorized over numpy input."""
    d = m.density
    if d.kind != "closed_form":
        raise UnsupportedDensityError(f"{m.kind}: no closed-form CDF")
    x = np.asarray(x, dtype=float)
    if m.kind == "doubling":
        return np.clip(x, 0.0, 1.0)
    if m.kind == "beta":
        rho1 = d.pieces[0].params[0]
        rho2 = d.pieces[1].params[0]
        cut = d.pieces[0].hi
        return np.where(x < cut, rho1 * x, rho1 * cut + rho2 * (x - cut))
    if m.kind == "gauss":
        return np.log1p(x) / _LN2
    if m.kind == "cusp":
        return -x * x / 4.0 + x / 2.0 + 0.75
    if m.kind == "logistic":
        return 2.0 / math.pi * np.arcsin(np.sqrt(np.clip(x, 0.0, 1.0)))
    raise UnsupportedDensityError(m.kind)


def _inverse_cdf(m: MapModel, u):
    """Quantile function of the invariant measure for the closed-form maps."""
    u = np.asarray(u, dtype=float)
    if m.kind == "doubling":
        return u
    if m.kind == "beta":
        d = m.density
        rho1 = d.pieces[0].params[0]
        rho2 = d.pieces[1].params[0]
        cut = d.pieces[0].hi
        mu1 = rho1 * cut
        return np.where(u < mu1, u / rho1, cut + (u - mu1) / rho2)
    if m.kind == "gauss":
        return np.exp2(u) - 1.0
    if m.kind == "cusp":
        return 1.0 - 2.0 * np.sqrt(1.0 - u)
    if m.kind == "logistic":
        s = np.sin(math.pi * u / 2.0)
        return s * s
    raise UnsupportedDensityError(m.kind)


def eval_map_batch(m: MapModel, x: np.ndarray) -> np.ndarray:
    """One map step applied elementwise to a float64 array."""
    x = np.asarray(x, dtype=float)
    if m.kind == "doubling":
        return (2.0 * x) % 1.0
    if m.kind == "beta":
        return (m.beta * x) % 1.0
    if m.kind == "gauss":
        with np.errstate(divide="ignore"):
            y = np.where(x > 0.0, 1.0 / np.where(x > 0.0, x, 1.0), 0.0)
        return y % 1.0
    if m.kind == "mp":
        g = m.gamma
        if g == 0.25:
            xg = np.sqrt(np.sqrt(x))
        elif g == 0.5:
            xg = np.sqrt(x)
        else:
            xg = np.power(x, g)
        return np.where(x < 0.5, x * (1.0 + 2.0**g * xg), 2.0 * x - 1.0)
    if m.kind == "cusp":
        return 1.0 - 2.0 * np.sqrt(np.abs(x))
    if m.kind == "logistic":
        return 4.0 * x * (1.0 - x)
    raise ValueError(m.kind)


DEFAULT_BURN_IN = 10_000


def sample_invariant(m: MapModel, rng: np.random.Generator,
                     burn_in: int = DEFAULT_BURN_IN) -> float:
    """One draw from the invariant measure.

    Closed-form densities invert their CDF; maps without one (mp, generic
    beta) iterate a Lebesgue-uniform seed for `burn_in` steps and return the
    endpoint.
    """
    return float(sample_invariant_batch(m, rng, 1, burn_in=burn_in)[0])


def sample_invariant_batch(m: MapModel, rng: np.random.Generator, size: int,
                           burn_in: int = DEFAULT_BURN_IN) -> np.ndarray:
    """Vectorized sampling; see sample_invariant."""
    u = rng.random(size)
    if m.density.kind == "closed_form":
        return _inverse_cdf(m, u)
    return iterate_hardware_batch(m, u, burn_in)


def iterate_hardware_batch(m: MapModel, x: np.ndarray, steps: int) -> np.ndarray:
    """Iterate a batch of points at float64 precision (burn-in only).

    Orbit-level roundoff is irrelevant here: only the terminal distribution
    matters, and the maps' correlations decay over the burn-in window.
    """
    x = np.array(x, dtype=float)
    if m.kind == "mp":
        g = m.gamma
        fastpow = None
        if g == 0.25:
            fastpow = lambda v: np.sqrt(np.sqrt(v))
        elif g == 0.5:
            fastpow = np.sqrt
        c = 2.0**g
        for _ in range(steps):
            left = x < 0.5
            xg = fastpow(x) if fastpow is not None else np.power(x, g)
            x = np.where(left, x * (1.0 + c * xg), 2.0 * x - 1.0)
        return x
    if m.kind == "logistic":
        for _ in range(steps):
            x = 4.0 * x * (1.0 - x)
        return x
    if m.kind == "beta":
        for _ in range(steps):
            x = (m.beta * x) % 1.0
        return x
    raise UnsupportedDensityError(f"no burn-in sampler for {m.kind}")
