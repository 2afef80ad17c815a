"""Probability laws used by the transport models.

Two layers live here:

* Analytic families (symmetric Beta, beta-binomial, Gamma, its discrete
  companion, Poisson), the truncated jump measures driving the harmonic
  families, the ordered-uniform mixing law on an interval, and the
  discrete harmonic jump weights.

* ``draw_*`` scalar samplers built on nothing but ``Generator.random()``.
  The compiled simulation core re-implements these algorithms step for
  step, so a pure-Python run and a compiled run of the same stream
  produce bit-identical trajectories.  Any change here must be mirrored
  in ``mixflow/engine/_cysim.pyx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import betaln, exp1, gammainc, gammaln

from .errors import (
    BadEpsilonError,
    BadScaleError,
    BadShapeError,
    OutOfRangeError,
    TermBudgetError,
)
from .rng import RngStream

__all__ = [
    "as_generator",
    "beta_symmetric_pdf",
    "beta_symmetric_logpdf",
    "beta_binomial_pmf",
    "GammaFamily",
    "DiscreteGammaFamily",
    "PoissonFamily",
    "JumpKind",
    "JumpMeasure",
    "truncated_jump_rate",
    "truncated_jump_sample",
    "OrderedDirichlet",
    "discrete_harmonic_weights",
    "draw_uniform",
    "draw_exponential",
    "draw_standard_normal",
    "draw_gamma",
    "draw_beta_symmetric",
    "draw_binomial",
    "draw_poisson",
    "draw_bulk_jump",
    "draw_input_jump",
]


def as_generator(stream: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(stream, RngStream):
        return stream.generator()
    return stream


def _check_two_s(two_s: float) -> float:
    if not (two_s > 0) or not math.isfinite(two_s):
        raise BadShapeError(f"two_s must be positive and finite, got {two_s}")
    return float(two_s)


# --- symmetric Beta and beta-binomial ----------------------------------------

def beta_symmetric_pdf(u, two_s: float):
    """Density of Beta(two_s, two_s) at u (vectorised); 0 outside (0, 1)."""
    _check_two_s(two_s)
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0) & (u < 1)
    with np.errstate(divide="ignore"):
        lognorm = betaln(two_s, two_s)
        ui = u[inside]
        out[inside] = np.exp((two_s - 1) * (np.log(ui) + np.log1p(-ui)) - lognorm)
    return out if out.ndim else float(out)


def beta_symmetric_logpdf(u: float, two_s: float) -> float:
    _check_two_s(two_s)
    if not 0 < u < 1:
        return -math.inf
    return (two_s - 1) * (math.log(u) + math.log1p(-u)) - betaln(two_s, two_s)


def beta_binomial_pmf(k: int, n: int, two_s: float) -> float:
    """P(K = k) where K | B ~ Binomial(n, B) and B ~ Beta(two_s, two_s)."""
    _check_two_s(two_s)
    if n < 0:
        raise OutOfRangeError("n must be >= 0")
    if k < 0 or k > n:
        return 0.0
    lg = (
        gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        + betaln(two_s + k, two_s + n - k) - betaln(two_s, two_s)
    )
    return float(math.exp(lg))


# --- classical families -------------------------------------------------------

@dataclass(frozen=True)
class GammaFamily:
    """Gamma(shape=two_s, scale=theta); the continuous single-site law."""

    two_s: float
    theta: float

    def __post_init__(self) -> None:
        _check_two_s(self.two_s)
        if not (self.theta > 0) or not math.isfinite(self.theta):
            raise BadScaleError(f"theta must be positive and finite, got {self.theta}")

    @property
    def mean(self) -> float:
        return self.two_s * self.theta

    @property
    def variance(self) -> float:
        return self.two_s * self.theta**2

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        with np.errstate(divide="ignore"):
            out[pos] = np.exp(
                (self.two_s - 1) * np.log(x[pos]) - x[pos] / self.theta
                - gammaln(self.two_s) - self.two_s * math.log(self.theta)
            )
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = gammainc(self.two_s, np.clip(x, 0, None) / self.theta)
        return out if out.ndim else float(out)

    def moment(self, k: int) -> float:
        """E[X^k] = theta^k * rising(two_s, k)."""
        out = self.theta**k
        for j in range(k):
            out *= self.two_s + j
        return out

    def sample(self, stream, size=None):
        return as_generator(stream).gamma(self.two_s, self.theta, size=size)


@dataclass(frozen=True)
class DiscreteGammaFamily:
    """Negative binomial with r = two_s and p = 1/(1+theta).

    This is the discrete single-site law: pmf(n) ∝ (theta/(1+theta))^n
    * rising(two_s, n)/n!, normalised by (1+theta)^(-two_s); mean is
    two_s * theta.  theta = 0 degenerates to a point mass at 0.
    """

    two_s: float
    theta: float

    def __post_init__(self) -> None:
        _check_two_s(self.two_s)
        if self.theta < 0 or not math.isfinite(self.theta):
            raise BadScaleError(f"theta must be >= 0 and finite, got {self.theta}")

    @property
    def mean(self) -> float:
        return self.two_s * self.theta

    @property
    def variance(self) -> float:
        return self.two_s * self.theta * (1.0 + self.theta)

    def pmf(self, n):
        n = np.asarray(n, dtype=np.int64)
        if self.theta == 0:
            out = (n == 0).astype(float)
            return out if out.ndim else float(out)
        r = self.two_s
        logp = (
            gammaln(r + n) - gammaln(r) - gammaln(n + 1.0)
            + n * (math.log(self.theta) - math.log1p(self.theta))
            - r * math.log1p(self.theta)
        )
        out = np.where(n >= 0, np.exp(logp), 0.0)
        return out if out.ndim else float(out)

    def factorial_moment(self, k: int) -> float:
        """E[N (N-1) ... (N-k+1)] = theta^k * rising(two_s, k)."""
        out = self.theta**k
        for j in range(k):
            out *= self.two_s + j
        return out

    def sample(self, stream, size=None):
        gen = as_generator(stream)
        if self.theta == 0:
            return np.zeros(size if size is not None else (), dtype=np.int64)
        return gen.negative_binomial(self.two_s, 1.0 / (1.0 + self.theta), size=size)


@dataclass(frozen=True)
class PoissonFamily:
    z: float

    def __post_init__(self) -> None:
        if self.z < 0 or not math.isfinite(self.z):
            raise BadScaleError(f"z must be >= 0 and finite, got {self.z}")

    @property
    def mean(self) -> float:
        return self.z

    def pmf(self, n):
        n = np.asarray(n, dtype=np.int64)
        if self.z == 0:
            out = (n == 0).astype(float)
            return out if out.ndim else float(out)
        logp = n * math.log(self.z) - self.z - gammaln(n + 1.0)
        out = np.where(n >= 0, np.exp(logp), 0.0)
        return out if out.ndim else float(out)

    def sample(self, stream, size=None):
        return as_generator(stream).poisson(self.z, size=size)


# --- truncated jump measures ---------------------------------------------------

class JumpKind(str, Enum):
    """Which sigma-finite jump-size measure is being truncated."""

    HARMONIC_BULK = "HARMONIC_BULK"          # u^-1 (1-u)^(two_s-1) du on (0, 1]
    RESERVOIR_INPUT = "RESERVOIR_INPUT"      # u^-1 e^-u du on (0, ∞)
    GENERIC_FINITE = "GENERIC_FINITE"        # user-supplied density on (0, 1]


@dataclass(frozen=True)
class JumpMeasure:
    kind: JumpKind
    epsilon: float
    two_s: float = 1.0
    density: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", JumpKind(self.kind))
        if self.kind is JumpKind.HARMONIC_BULK:
            _check_two_s(self.two_s)
            if not 0 < self.epsilon < 1:
                raise BadEpsilonError(
                    f"HARMONIC_BULK needs epsilon in (0, 1), got {self.epsilon}"
                )
        elif self.kind is JumpKind.RESERVOIR_INPUT:
            if not self.epsilon > 0:
                raise BadEpsilonError(
                    f"RESERVOIR_INPUT needs epsilon > 0, got {self.epsilon}"
                )
        else:
            if self.density is None:
                raise BadEpsilonError("GENERIC_FINITE needs a density callable")
            if not 0 < self.epsilon < 1:
                raise BadEpsilonError(
                    f"GENERIC_FINITE needs epsilon in (0, 1), got {self.epsilon}"
                )


def bulk_jump_rate(two_s: float, epsilon: float) -> float:
    """Total mass of u^-1 (1-u)^(two_s-1) du on [epsilon, 1]."""
    _check_two_s(two_s)
    if not 0 < epsilon < 1:
        raise BadEpsilonError(f"epsilon must be in (0, 1), got {epsilon}")
    if two_s == 1.0:
        return math.log(1.0 / epsilon)
    # QAWS absorbs the algebraic (1-u)^(two_s-1) endpoint factor exactly,
    # leaving only the smooth 1/u part to the integrand.
    val, _err = integrate.quad(
        lambda u: 1.0 / u,
        epsilon,
        1.0,
        weight="alg",
        wvar=(0.0, two_s - 1.0),
        epsabs=1e-12,
        epsrel=1e-11,
        limit=200,
    )
    return val


def input_jump_rate(epsilon: float) -> float:
    """Total mass of u^-1 e^-u du on [epsilon, ∞) — the exponential integral E1."""
    if not epsilon > 0:
        raise BadEpsilonError(f"epsilon must be > 0, got {epsilon}")
    return float(exp1(epsilon))


def truncated_jump_rate(measure: JumpMeasure) -> float:
    """Total event rate carried by the measure after dropping jumps < epsilon."""
    if measure.kind is JumpKind.HARMONIC_BULK:
        return bulk_jump_rate(measure.two_s, measure.epsilon)
    if measure.kind is JumpKind.RESERVOIR_INPUT:
        return input_jump_rate(measure.epsilon)
    val, _err = integrate.quad(
        measure.density, measure.epsilon, 1.0, epsabs=1e-12, epsrel=1e-10, limit=200
    )
    if not math.isfinite(val) or val < 0:
        raise BadEpsilonError("generic jump density has non-finite truncated mass")
    return val


@lru_cache(maxsize=32)
def _generic_inverse_cdf(measure: JumpMeasure) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(measure.epsilon, 1.0, 4097)
    dens = np.asarray(measure.density(grid), dtype=float)
    if np.any(~np.isfinite(dens)) or np.any(dens < 0):
        raise BadEpsilonError("generic jump density must be finite and >= 0 on [eps, 1]")
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
    if cdf[-1] <= 0:
        raise BadEpsilonError("generic jump density has zero mass on [eps, 1]")
    return grid, cdf / cdf[-1]


def truncated_jump_sample(measure: JumpMeasure, stream, size=None):
    """Draw jump sizes from the epsilon-truncated, normalised measure."""
    gen = as_generator(stream)
    if measure.kind is JumpKind.GENERIC_FINITE:
        grid, cdf = _generic_inverse_cdf(measure)
        u = gen.random(size)
        out = np.interp(u, cdf, grid)
        return out if size is not None else float(out)
    if size is None:
        if measure.kind is JumpKind.HARMONIC_BULK:
            return draw_bulk_jump(gen, measure.two_s, measure.epsilon)
        return draw_input_jump(gen, measure.epsilon)
    if measure.kind is JumpKind.HARMONIC_BULK:
        return np.array(
            [draw_bulk_jump(gen, measure.two_s, measure.epsilon) for _ in range(int(size))]
        )
    return np.array([draw_input_jump(gen, measure.epsilon) for _ in range(int(size))])


# --- ordered mixing law ---------------------------------------------------------

@dataclass(frozen=True)
class OrderedDirichlet:
    """Law of the ordered hidden parameters on [theta_left, theta_right].

    With n_sites = N, the vector (theta_1 <= ... <= theta_N) has density
    proportional to the product of the N+1 consecutive gaps, each raised
    to two_s - 1.  Equivalently theta_i = theta_left + span * S_i where
    S is the cumulative sum of a flat Dirichlet(two_s, ..., two_s) over
    N+1 parts; that representation drives sampling and exact moments.
    """

    n_sites: int
    two_s: float
    theta_left: float
    theta_right: float

    def __post_init__(self) -> None:
        _check_two_s(self.two_s)
        if self.n_sites < 1:
            raise OutOfRangeError("n_sites must be >= 1")
        if self.theta_left > self.theta_right:
            raise OutOfRangeError("theta_left must be <= theta_right")

    @property
    def span(self) -> float:
        return self.theta_right - self.theta_left

    @property
    def degenerate(self) -> bool:
        return self.span == 0.0

    def mean(self, i: int) -> float:
        """E[theta_i] for 1-based site i (linear profile, any two_s)."""
        if not 1 <= i <= self.n_sites:
            raise OutOfRangeError(f"site index {i} out of range")
        return self.theta_left + self.span * i / (self.n_sites + 1)

    def sample(self, stream, size=None):
        gen = as_generator(stream)
        if self.degenerate:
            if size is None:
                return np.full(self.n_sites, self.theta_left)
            return np.full((int(size), self.n_sites), self.theta_left)
        shape = (self.n_sites + 1,) if size is None else (int(size), self.n_sites + 1)
        g = gen.gamma(self.two_s, 1.0, size=shape)
        s = np.cumsum(g, axis=-1)
        frac = s[..., :-1] / s[..., -1:]
        return self.theta_left + self.span * frac

    def log_normalization(self) -> float:
        k = self.n_sites + 1
        return (
            gammaln(self.two_s * k) - k * gammaln(self.two_s)
            - (self.two_s * k - 1.0) * math.log(self.span)
        )

    def logdensity(self, theta: Sequence[float]) -> float:
        """Log density; -inf outside the ordered simplex (by convention)."""
        if self.degenerate:
            raise OutOfRangeError("degenerate law (theta_left == theta_right) has no density")
        th = np.asarray(theta, dtype=float)
        if th.shape != (self.n_sites,):
            raise OutOfRangeError(f"expected {self.n_sites} coordinates, got {th.shape}")
        gaps = np.diff(np.concatenate([[self.theta_left], th, [self.theta_right]]))
        if np.any(gaps < 0):
            return -math.inf
        if np.any(gaps == 0):
            if self.two_s > 1:
                return -math.inf
            if self.two_s < 1:
                return math.inf
            return self.log_normalization()
        return float(self.log_normalization() + (self.two_s - 1.0) * np.log(gaps).sum())

    def moment(self, exponents: Sequence[int], term_budget: int = 200_000) -> float:
        """Exact E[prod theta_i^exponents[i]] via the Dirichlet-gap expansion."""
        xi = [int(e) for e in exponents]
        if len(xi) != self.n_sites or any(e < 0 for e in xi):
            raise OutOfRangeError("exponents must be >= 0, one per site")
        if self.degenerate:
            return float(self.theta_left ** sum(xi))
        k = self.n_sites + 1
        zero = (0,) * k
        poly: dict[tuple[int, ...], float] = {zero: 1.0}
        for i, e in enumerate(xi, start=1):
            for _ in range(e):
                nxt: dict[tuple[int, ...], float] = {}
                for expo, coef in poly.items():
                    if self.theta_left != 0.0:
                        nxt[expo] = nxt.get(expo, 0.0) + coef * self.theta_left
                    for j in range(i):
                        bumped = expo[:j] + (expo[j] + 1,) + expo[j + 1:]
                        nxt[bumped] = nxt.get(bumped, 0.0) + coef * self.span
                poly = nxt
                if len(poly) > term_budget:
                    raise TermBudgetError(
                        f"moment expansion exceeded {term_budget} terms"
                    )
        a = self.two_s
        total = 0.0
        for expo, coef in poly.items():
            num = 1.0
            for e in expo:
                for t in range(e):
                    num *= a + t
            order = sum(expo)
            den = 1.0
            for t in range(order):
                den *= k * a + t
            total += coef * num / den
        return total


# --- discrete harmonic jump weights ---------------------------------------------

def discrete_harmonic_weights(n: int, two_s: float) -> np.ndarray:
    """Jump weights w(k) for moving k of n particles across an edge, k = 1..n.

    w(k) = (1/k) * n! / (n-k)! * rising(two_s, n-k) / rising(two_s, n),
    computed by a stable product recurrence.  For two_s = 1 this is 1/k.
    """
    _check_two_s(two_s)
    if n < 0:
        raise OutOfRangeError("n must be >= 0")
    out = np.empty(n, dtype=float)
    prod = 1.0
    for k in range(1, n + 1):
        prod *= (n - k + 1) / (two_s + n - k)
        out[k - 1] = prod / k
    return out


# --- draw-level samplers (mirrored by the compiled core) -------------------------

def draw_uniform(gen: np.random.Generator) -> float:
    return gen.random()


def draw_exponential(gen: np.random.Generator) -> float:
    return -math.log(1.0 - gen.random())


def draw_standard_normal(gen: np.random.Generator) -> float:
    """Marsaglia polar method (second coordinate discarded)."""
    while True:
        x = 2.0 * gen.random() - 1.0
        y = 2.0 * gen.random() - 1.0
        s = x * x + y * y
        if 0.0 < s < 1.0:
            return x * math.sqrt(-2.0 * math.log(s) / s)


def draw_gamma(gen: np.random.Generator, shape: float) -> float:
    """Marsaglia-Tsang squeeze for shape >= 1, with the power boost below 1."""
    if shape <= 0:
        raise BadShapeError(f"gamma shape must be > 0, got {shape}")
    if shape < 1.0:
        g = _draw_gamma_core(gen, shape + 1.0)
        u = gen.random()
        return g * u ** (1.0 / shape)
    return _draw_gamma_core(gen, shape)


def _draw_gamma_core(gen: np.random.Generator, shape: float) -> float:
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = draw_standard_normal(gen)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = gen.random()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        logu = math.log(u) if u > 0.0 else -math.inf
        if logu < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


def draw_beta_symmetric(gen: np.random.Generator, two_s: float) -> float:
    g1 = draw_gamma(gen, two_s)
    g2 = draw_gamma(gen, two_s)
    return g1 / (g1 + g2)


def draw_binomial(gen: np.random.Generator, n: int, p: float) -> int:
    """CDF inversion walk; falls back to Bernoulli summing if (1-p)^n underflows."""
    if n < 0:
        raise OutOfRangeError("n must be >= 0")
    if n == 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    q = (1.0 - p) ** n
    u = gen.random()
    if q > 0.0:
        odds = p / (1.0 - p)
        k = 0
        pmf = q
        cdf = q
        while u > cdf and k < n:
            pmf *= float(n - k) / float(k + 1) * odds
            k += 1
            cdf += pmf
        return k
    count = 1 if u < p else 0
    for _ in range(n - 1):
        if gen.random() < p:
            count += 1
    return count


def draw_poisson(gen: np.random.Generator, lam: float) -> int:
    """Counts unit-rate exponential arrivals up to lam (exact for any lam)."""
    if lam <= 0.0:
        return 0
    k = 0
    acc = draw_exponential(gen)
    while acc <= lam:
        k += 1
        acc += draw_exponential(gen)
    return k


def draw_bulk_jump(gen: np.random.Generator, two_s: float, epsilon: float) -> float:
    """Jump size from the truncated measure u^-1 (1-u)^(two_s-1) on [eps, 1].

    two_s = 1 admits exact inverse-CDF sampling; otherwise a two-piece
    envelope (scaled u^-1 on [eps, 1/2], scaled (1-u)^(two_s-1) above)
    is rejection-corrected.
    """
    if not 0 < epsilon < 1:
        raise BadEpsilonError(f"epsilon must be in (0, 1), got {epsilon}")
    if two_s == 1.0:
        return epsilon ** gen.random()
    left = epsilon < 0.5
    lo = 0.5 if left else epsilon
    if left:
        c1 = (1.0 - epsilon) ** (two_s - 1.0) if two_s > 1.0 else 2.0 ** (1.0 - two_s)
        m1 = c1 * math.log(0.5 / epsilon)
    else:
        c1 = 0.0
        m1 = 0.0
    m2 = 2.0 * (1.0 - lo) ** two_s / two_s
    tot = m1 + m2
    while True:
        w = gen.random() * tot
        if w < m1:
            u = epsilon * math.exp(gen.random() * math.log(0.5 / epsilon))
            if gen.random() * c1 <= (1.0 - u) ** (two_s - 1.0):
                return u
        else:
            u = 1.0 - (1.0 - lo) * gen.random() ** (1.0 / two_s)
            if gen.random() * 2.0 * u <= 1.0:
                return u


def draw_input_jump(gen: np.random.Generator, epsilon: float) -> float:
    """Jump size from the truncated measure u^-1 e^-u on [eps, ∞)."""
    if not epsilon > 0:
        raise BadEpsilonError(f"epsilon must be > 0, got {epsilon}")
    if epsilon >= 1.0:
        while True:
            u = epsilon - math.log(1.0 - gen.random())
            if gen.random() * u <= epsilon:
                return u
    m1 = math.log(1.0 / epsilon)
    m2 = math.exp(-1.0)
    tot = m1 + m2
    while True:
        w = gen.random() * tot
        if w < m1:
            u = epsilon ** gen.random()
            if gen.random() <= math.exp(-u):
                return u
        else:
            u = 1.0 - math.log(1.0 - gen.random())
            if gen.random() * u <= 1.0:
                return u
