"""Duality functions and deterministic identity checks.

The transport families come in linked pairs: a discrete process watched
through factorial moments behaves like its continuous partner watched
through plain moments, and both project onto a "hidden parameter" process
whose state is the per-site parameter of a product equilibrium.  Each link
is an exact generator-level identity.  This module evaluates the four
duality observables and verifies every such identity numerically, with
two independent computation routes per identity (closed Gamma/digamma
forms on one side, Gaussian quadrature / series recurrences on the other)
so that agreement is evidence rather than tautology.

All checks are deterministic; only :func:`mc_mixture_duality` uses
randomness, comparing two Monte Carlo estimators of the same mixture
expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import betaln, digamma, gammaln

from .distributions import discrete_harmonic_weights
from .engine import ensemble_at
from .errors import (
    BadEpsilonError,
    DivergentMomentError,
    KindMismatchError,
    OutOfRangeError,
    TruncationInsufficientError,
    UnsupportedModelError,
)
from .models import (
    DualIndex,
    Family,
    Graph,
    ModelSpec,
    StateKind,
    StateVector,
)
from .quadrature import beta_weighted_average, laguerre_rule, unit_jacobi_rule
from .rng import RngStream

_LD = np.longdouble

# finite-difference step and extrapolation order used for d/dz in the
# generating-function checks; recorded in every report that uses them
FD_STEP = 1e-5
RICHARDSON_ORDER = 4


class DualityKind(str, Enum):
    """The four duality observables.

    FACTORIAL    counts vs counts:   prod n!/(n-k)! * G(2s)/G(2s+k), 0 if k > n
    MOMENT       counts vs masses:   prod x^k * G(2s)/G(2s+k)
    POWER        counts vs thetas:   prod theta^n
    EXPONENTIAL  thetas vs masses:   prod exp(theta * x)
    """

    FACTORIAL = "factorial"
    MOMENT = "moment"
    POWER = "power"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class IdentityReport:
    """Outcome of one identity check: two routes to the same number."""

    name: str
    params: dict[str, Any]
    lhs: float
    rhs: float
    abs_error: float
    tol: float
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "abs_error": self.abs_error,
            "tol": self.tol,
            "passed": self.passed,
            "detail": self.detail,
        }


def _report(name: str, params: dict[str, Any], lhs: float, rhs: float,
            tol: float, detail: dict[str, Any] | None = None,
            abs_error: float | None = None) -> IdentityReport:
    err = abs(lhs - rhs) if abs_error is None else abs_error
    return IdentityReport(name=name, params=params, lhs=float(lhs),
                          rhs=float(rhs), abs_error=float(err), tol=float(tol),
                          passed=bool(err <= tol), detail=detail or {})


# --- duality observables ----------------------------------------------------------


def _log_rising(two_s: float, k: int) -> float:
    """log of G(two_s + k) / G(two_s)."""
    return float(gammaln(two_s + k) - gammaln(two_s))


def eval_duality(kind: DualityKind, dual, state: StateVector,
                 two_s: float | None = None) -> float:
    """Evaluate a duality observable on a (dual, state) pair.

    ``dual`` is a :class:`DualIndex` for the FACTORIAL / MOMENT / POWER
    kinds and a THETAS :class:`StateVector` for EXPONENTIAL.  ``two_s``
    is required by the FACTORIAL and MOMENT kinds, whose per-site factors
    carry a 1/rising(2s, k) normalization; the POWER and EXPONENTIAL
    observables are parameter-free.
    """
    kind = DualityKind(kind)

    if kind is DualityKind.EXPONENTIAL:
        if not (isinstance(dual, StateVector) and dual.kind is StateKind.THETAS):
            raise KindMismatchError("EXPONENTIAL pairs a THETAS vector with masses")
        if state.kind is not StateKind.MASSES:
            raise KindMismatchError(f"EXPONENTIAL needs a MASSES state, got {state.kind.value}")
        zeta = state.mapping
        return float(math.exp(sum(th * zeta.get(v, 0.0) for v, th in dual.values)))

    if not isinstance(dual, DualIndex):
        raise KindMismatchError(f"{kind.value} duality needs a DualIndex")

    if kind is DualityKind.FACTORIAL:
        if state.kind is not StateKind.COUNTS:
            raise KindMismatchError(f"FACTORIAL needs a COUNTS state, got {state.kind.value}")
        if two_s is None:
            raise OutOfRangeError("FACTORIAL duality needs two_s")
        eta = state.mapping
        log_val = 0.0
        for v, k in dual.xi:
            if k == 0:
                continue
            n = int(eta.get(v, 0.0))
            if k > n:
                return 0.0
            log_val += gammaln(n + 1) - gammaln(n - k + 1) - _log_rising(two_s, k)
        return float(math.exp(log_val))

    if kind is DualityKind.MOMENT:
        if state.kind is not StateKind.MASSES:
            raise KindMismatchError(f"MOMENT needs a MASSES state, got {state.kind.value}")
        if two_s is None:
            raise OutOfRangeError("MOMENT duality needs two_s")
        zeta = state.mapping
        val = 1.0
        for v, k in dual.xi:
            if k:
                val *= zeta.get(v, 0.0) ** k * math.exp(-_log_rising(two_s, k))
        return float(val)

    # POWER: prod theta^n with the convention 0^0 = 1
    if state.kind is not StateKind.THETAS:
        raise KindMismatchError(f"POWER needs a THETAS state, got {state.kind.value}")
    theta = state.mapping
    val = 1.0
    for v, k in dual.xi:
        if k:
            val *= theta.get(v, 0.0) ** k
    return float(val)


def power_observable(xi: np.ndarray) -> Callable[[np.ndarray], float]:
    """Observable state -> prod state_i^xi_i (0^0 = 1), for ensemble runs."""
    xi = np.asarray(xi, dtype=np.int64)
    active = np.nonzero(xi)[0]
    exps = xi[active].astype(np.float64)

    def obs(state: np.ndarray) -> float:
        return float(np.prod(state[active] ** exps)) if len(active) else 1.0

    return obs


# --- edge-level duality: discrete redistribution vs hidden convex mixing ------------


def _beta_binomial_vector(n: int, two_s: float) -> np.ndarray:
    """pmf of K where K | B ~ Binomial(n, B), B ~ Beta(2s, 2s); longdouble.

    Product/ratio recurrences keep every entry at a few ulp so the duality
    checks can hit 1e-10 absolute tolerances.
    """
    s2 = _LD(two_s)
    pmf = np.empty(n + 1, dtype=_LD)
    p0 = _LD(1.0)
    for j in range(n):
        p0 *= (s2 + j) / (2 * s2 + j)
    pmf[0] = p0
    for k in range(n):
        pmf[k] = p0
        p0 *= (_LD(n - k) / _LD(k + 1)) * ((s2 + k) / (s2 + n - k - 1))
    pmf[n] = p0
    return pmf


def check_kmp_edge_duality(xi_pair: tuple[int, int], theta_pair: tuple[float, float],
                           two_s: float, tol: float = 1e-10) -> IdentityReport:
    """Generator identity behind the power duality of the discrete edge kernel.

    Acting on theta^xi with the edge redistribution (all n = xi_i + xi_j
    particles reshuffled by a symmetric Beta coin) must match acting with
    the hidden mixing kernel (both parameters replaced by the same convex
    combination).  Left route: explicit compound-Binomial pmf sum.  Right
    route: Gauss-Jacobi average of (u theta_i + (1-u) theta_j)^n.
    """
    xi_i, xi_j = int(xi_pair[0]), int(xi_pair[1])
    if xi_i < 0 or xi_j < 0:
        raise OutOfRangeError("dual indices must be >= 0")
    n = xi_i + xi_j
    if n > 60:
        raise OutOfRangeError("|xi| > 60 exceeds the Gamma-arithmetic range")
    # both sides are homogeneous of degree n in (theta_i, theta_j); scaling
    # the inputs to <= 1 checks the same identity while keeping the values
    # O(1), so the absolute tolerance is meaningful for theta up to 3
    scale = max(1.0, float(theta_pair[0]), float(theta_pair[1]))
    th_i = _LD(theta_pair[0]) / _LD(scale)
    th_j = _LD(theta_pair[1]) / _LD(scale)

    base = th_i**xi_i * th_j**xi_j
    pmf = _beta_binomial_vector(n, two_s)
    lhs = _LD(0.0)
    for k in range(n + 1):
        lhs += pmf[k] * th_i**k * th_j ** (n - k)
    lhs -= base

    rhs = beta_weighted_average(
        lambda u: (np.asarray(u, dtype=_LD) * th_i + (1 - np.asarray(u, dtype=_LD)) * th_j) ** n,
        two_s, degree=n,
    ) - base

    return _report(
        "kmp-edge-duality",
        {"xi": [xi_i, xi_j], "theta": [float(theta_pair[0]), float(theta_pair[1])],
         "two_s": two_s},
        lhs, rhs, tol,
        detail={"routes": ["beta-binomial pmf sum", "gauss-jacobi average"],
                "theta_scale": scale},
    )


# --- directed mass redistribution vs one-sided parameter mixing ---------------------


def _mass_measure_integral(f: Callable[[float], float], two_s: float,
                           eps_q: float) -> tuple[float, float]:
    """∫ f(u) (1-u)^(2s-1) u^{-1} du over [eps_q, 1], adaptive.

    The substitution v = (1-u)^(2s) removes the u = 1 endpoint singularity
    for 2s < 1; the transformed integrand is smooth on (0, (1-eps_q)^(2s)].
    Returns (value, estimated_abs_error).
    """
    v_hi = (1.0 - eps_q) ** two_s

    def g(v: float) -> float:
        u = 1.0 - v ** (1.0 / two_s)
        if u <= 0.0:
            return 0.0
        return f(u) / u

    val, err = quad(g, 0.0, v_hi, limit=200, epsabs=1e-13, epsrel=1e-12)
    return val / two_s, err / two_s


def check_mass_redistribution_duality(
    y_pair: tuple[float, float],
    theta_pair: tuple[float, float],
    two_s: float,
    tol: float = 1e-9,
    eps_q: float = 1e-2,
) -> IdentityReport:
    """Exponential duality of the directed fraction-transfer edge kernel.

    The kernel moves a fraction u of ONE site's mass to the other, with
    jump measure (1-u)^(2s-1) u^{-1} du; its partner replaces one
    parameter by a convex combination, leaving the other untouched.  Both
    generator actions on exp(th1 y1 + th2 y2) are integrated adaptively
    over the common truncation [eps_q, 1] and compared.
    """
    if not (0.0 < eps_q < 1.0):
        raise BadEpsilonError(f"eps_q must lie in (0, 1), got {eps_q}")
    y1, y2 = float(y_pair[0]), float(y_pair[1])
    th1, th2 = float(theta_pair[0]), float(theta_pair[1])
    base = math.exp(th1 * y1 + th2 * y2)

    def mass_side(u: float) -> float:
        down = math.exp(th1 * (y1 - u * y1) + th2 * (y2 + u * y1))
        up = math.exp(th1 * (y1 + u * y2) + th2 * (y2 - u * y2))
        return down + up - 2.0 * base

    def parameter_side(u: float) -> float:
        left = math.exp((th1 * (1.0 - u) + th2 * u) * y1 + th2 * y2)
        right = math.exp(th1 * y1 + (u * th1 + (1.0 - u) * th2) * y2)
        return left + right - 2.0 * base

    lhs, lhs_err = _mass_measure_integral(mass_side, two_s, eps_q)
    rhs, rhs_err = _mass_measure_integral(parameter_side, two_s, eps_q)
    return _report(
        "mass-redistribution-duality",
        {"y": [y1, y2], "theta": [th1, th2], "two_s": two_s, "eps_q": eps_q},
        lhs, rhs, tol,
        detail={"quad_abs_err": [lhs_err, rhs_err]},
    )


# --- reservoir moment relation ------------------------------------------------------


def harmonic_moment_scale(two_s: float) -> Callable[[int], float]:
    """m -> G(2s+m)/G(2s): the m-th moment of a unit-scale Gamma(2s) variable."""

    def moment_r(m: int) -> float:
        return float(math.exp(gammaln(two_s + m) - gammaln(two_s)))

    return moment_r


def harmonic_measure_moments(two_s: float) -> Callable[[int, int], float]:
    """(a, b) -> ∫ u^a (1-u)^b (1-u)^(2s-1) u^{-1} du = B(a, b+2s), a >= 1."""

    def moments(a: int, b: int) -> float:
        if a < 1:
            raise DivergentMomentError(
                "the jump measure has infinite mass: u-moment of order 0 diverges"
            )
        return float(math.exp(betaln(a, b + two_s)))

    return moments


def check_moment_relation(
    n: int,
    k: int,
    moment_r: Callable[[int], float] | None = None,
    measure_moments: Callable[[int, int], float] | None = None,
    two_s: float | None = None,
    tol: float = 1e-10,
) -> IdentityReport:
    """Condition for a reservoir kernel to project onto parameter mixing.

    R_{n-k} R_k ∫u^k M(du)  =  R_n ∫u^k (1-u)^{n-k} M(du)  for 1 <= k <= n,
    where R_m is the m-th moment of the site's equilibrium marginal and M
    is the jump measure.  Defaults check the Gamma / (1-u)^(2s-1) u^{-1}
    pairing via log-Gamma closed forms on both sides; the error is
    reported relative (|lhs/rhs - 1|) because the raw values span many
    orders of magnitude.
    """
    if n < 1:
        raise OutOfRangeError("n must be >= 1")
    if k == 0:
        raise DivergentMomentError(
            "k = 0 is not checkable: both sides carry the (infinite) total mass"
        )
    if not 1 <= k <= n:
        raise OutOfRangeError(f"need 1 <= k <= n, got k={k}, n={n}")
    if moment_r is None or measure_moments is None:
        if two_s is None:
            raise OutOfRangeError("two_s is required with the built-in callables")
        moment_r = moment_r or harmonic_moment_scale(two_s)
        measure_moments = measure_moments or harmonic_measure_moments(two_s)

    lhs = moment_r(n - k) * moment_r(k) * measure_moments(k, 0)
    rhs = moment_r(n) * measure_moments(k, n - k)
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise DivergentMomentError("moment callables returned a non-finite value")
    rel = abs(lhs / rhs - 1.0) if rhs != 0 else abs(lhs - rhs)
    return _report(
        "reservoir-moment-relation",
        {"n": n, "k": k, "two_s": two_s},
        lhs, rhs, tol, abs_error=rel,
        detail={"error_scale": "relative"},
    )


# --- reservoir intertwining closed forms ---------------------------------------------

_KMP_FAMILIES = {Family.KMP_DISCRETE, Family.KMP_CONTINUOUS, Family.HIDDEN_KMP}
_HARMONIC_FAMILIES = {Family.HARMONIC_DISCRETE, Family.HARMONIC_CONTINUOUS,
                      Family.HIDDEN_HARMONIC}


def _resolve_reservoir_family(family) -> str:
    if isinstance(family, str) and family in ("kmp", "harmonic"):
        return family
    fam = Family(family)
    if fam in _KMP_FAMILIES:
        return "kmp"
    if fam in _HARMONIC_FAMILIES:
        return "harmonic"
    raise UnsupportedModelError(f"no reservoir intertwining route for {fam.value}")


def _kmp_reservoir_sides(n: int, theta: float, theta_star: float,
                         two_s: float) -> tuple[float, float, dict[str, Any]]:
    """Both routes for the symmetric-exchange reservoir, normalized by R_n.

    Left: closed moment algebra of the (x + Y) B thinning - the Beta
    moment E[B^n] times the binomial Gamma-moment convolution.  Right:
    the hidden kernel's Beta average of ((1-u) theta + u theta*)^n; at
    2s = 1 the exact uniform average (sum theta*^k theta^(n-k))/(n+1)
    replaces quadrature.  Both sides are homogeneous of degree n, so the
    parameters are pre-scaled to <= 1 (reported as theta_scale).
    """
    s2 = _LD(two_s)
    scale = max(1.0, float(theta), float(theta_star))
    th = _LD(theta) / _LD(scale)
    ts = _LD(theta_star) / _LD(scale)

    eb = _LD(1.0)  # E[B^n] for B ~ Beta(2s, 2s)
    for j in range(n):
        eb *= (s2 + j) / (2 * s2 + j)

    # sum_k C(n,k) R_k R_{n-k} / R_n * theta^k theta*^{n-k}
    conv = _LD(0.0)
    c = _LD(1.0)
    for k in range(n + 1):
        conv += c * th**k * ts ** (n - k)
        if k < n:
            c *= (_LD(n - k) / _LD(k + 1)) * ((s2 + k) / (s2 + n - k - 1))
    lhs = eb * conv - th**n

    if two_s == 1.0:
        acc = _LD(0.0)
        for k in range(n + 1):
            acc += ts**k * th ** (n - k)
        rhs = acc / _LD(n + 1) - th**n
        rhs_route = "uniform-average closed sum"
    else:
        rhs = beta_weighted_average(
            lambda u: ((1 - np.asarray(u, dtype=_LD)) * th + np.asarray(u, dtype=_LD) * ts) ** n,
            two_s, degree=n,
        ) - th**n
        rhs_route = "gauss-jacobi average"
    detail = {"routes": ["moment-algebra closed form", rhs_route],
              "normalized_by": "R_n", "theta_scale": scale}
    return float(lhs), float(rhs), detail


def _harmonic_reservoir_sides(n: int, theta: float, theta_star: float,
                              two_s: float) -> tuple[float, float, dict[str, Any]]:
    """Both routes for the fraction-exit/Gamma-input reservoir, / R_n.

    Left (quadrature): exit term integrates the degree n-1 polynomial
    ((1-u)^n - 1)/u against (1-u)^(2s-1) du by Gauss-Jacobi; input term
    sums C(n,k) G(k) R_{n-k}/R_n theta^{n-k} theta*^k with G(k) taken
    from a Gauss-Laguerre rule.  Right (closed): digamma difference for
    the exit plus the discrete fraction-jump weights for the input.  Both
    sides are homogeneous of degree n, so parameters are pre-scaled to
    <= 1 (reported as theta_scale).
    """
    s2 = _LD(two_s)
    scale = max(1.0, float(theta), float(theta_star))
    th = _LD(theta) / _LD(scale)
    ts = _LD(theta_star) / _LD(scale)

    if n == 0:
        return 0.0, 0.0, {"routes": ["quadrature", "digamma closed form"]}

    # exit: theta^n * ∫ ((1-u)^n - 1)/u * (1-u)^(2s-1) du, integrand polynomial
    u, w = unit_jacobi_rule(max((n + 1) // 2, 1) + 2, 1.0, two_s)
    ul = u.astype(_LD)
    wl = w.astype(_LD)
    one_m = 1 - ul
    exit_quad = (wl * ((one_m**n - 1) / ul)).sum()

    # input: Gamma(k) via Gauss-Laguerre, rising-factorial ratios stepwise
    gl_u, gl_w = laguerre_rule(max((n + 1) // 2, 1) + 2)
    gul = gl_u.astype(_LD)
    gwl = gl_w.astype(_LD)
    inp = _LD(0.0)
    binom = _LD(1.0)  # C(n,k)
    r_ratio = _LD(1.0)  # R_{n-k} / R_n
    for k in range(1, n + 1):
        binom *= _LD(n - k + 1) / _LD(k)
        r_ratio /= s2 + n - k
        gamma_k = (gwl * gul ** (k - 1)).sum()
        inp += binom * gamma_k * r_ratio * th ** (n - k) * ts**k
    lhs = th**n * exit_quad + inp

    # closed forms: psi(2s) - psi(2s+n) and the discrete jump weights
    exit_closed = _LD(digamma(two_s)) - _LD(digamma(two_s + n))
    weights = discrete_harmonic_weights(n, two_s)
    inp_closed = _LD(0.0)
    for k in range(1, n + 1):
        inp_closed += _LD(weights[k - 1]) * th ** (n - k) * ts**k
    rhs = th**n * exit_closed + inp_closed

    detail = {"routes": ["gauss-jacobi + gauss-laguerre", "digamma + weight recurrence"],
              "normalized_by": "R_n", "theta_scale": scale}
    return float(lhs), float(rhs), detail


def check_reservoir_intertwining(n: int, theta: float, theta_star: float,
                                 two_s: float, family,
                                 tol: float = 1e-10) -> IdentityReport:
    """Reservoir kernels project onto parameter mixing: verify both actions.

    Evaluates (reservoir generator, then Gamma-average) against
    (Gamma-average, then hidden mixing generator) on x^n / R_n, each side
    by an independent route.  n = 0 gives 0 = 0: constants are harmonic
    for both generators.
    """
    if n < 0 or n > 40:
        raise OutOfRangeError("n must lie in 0..40")
    if theta < 0 or theta_star < 0:
        raise OutOfRangeError("parameters must be >= 0")
    route = _resolve_reservoir_family(family)
    if route == "kmp":
        lhs, rhs, detail = _kmp_reservoir_sides(n, theta, theta_star, two_s)
    else:
        lhs, rhs, detail = _harmonic_reservoir_sides(n, theta, theta_star, two_s)
    return _report(
        f"reservoir-intertwining-{route}",
        {"n": n, "theta": theta, "theta_star": theta_star, "two_s": two_s},
        lhs, rhs, tol, detail=detail,
    )


# --- Poisson generating-function algebra ---------------------------------------------


def _poisson_pmf_truncated(z: float, order: int,
                           max_terms: int = 4000) -> np.ndarray:
    """Longdouble Poisson(z) pmf, truncated so that polynomial averages of
    degree <= order carry a relative tail below ~1e-18.

    A mass-based cutoff is not enough: terms with negligible probability
    still contribute to high moments, so the stop rule weights each pmf
    entry by (n+1)^order and compares against the running magnitude.
    """
    zl = _LD(z)
    term = np.exp(-zl)
    terms = [term]
    acc = term
    n = 0
    while True:
        weight = term * _LD(n + 1) ** order
        acc += weight
        if n > z and weight < _LD(1e-18) * acc:
            break
        n += 1
        if n > max_terms:
            raise TruncationInsufficientError(
                f"Poisson({z}) average of degree {order} needs more than "
                f"{max_terms} terms"
            )
        term = term * zl / n
        terms.append(term)
    return np.array(terms, dtype=_LD)


def _poisson_average(z: float, f_vals: Callable[[np.ndarray], np.ndarray],
                     order: int) -> _LD:
    pmf = _poisson_pmf_truncated(z, order)
    n = np.arange(len(pmf), dtype=_LD)
    return (pmf * f_vals(n)).sum()


def check_poisson_intertwiner(n_max: int = 8,
                              z_grid: Sequence[float] = (0.1, 1.0, 5.0),
                              tol: float = 1e-6) -> IdentityReport:
    """Ladder-operator algebra of the Poisson generating transform.

    With Gf(z) = sum_n z^n e^{-z} f(n)/n!, lowering a f(n) = n f(n-1) must
    transform into multiplication by z, and raising a'f(n) = f(n+1) into
    d/dz + 1.  Checked on the scaled monomials f(n) = (n / max(1,z))^m,
    which span the same polynomial space while keeping Gf at order one so
    the finite-difference roundoff stays far below the tolerance.  The
    difference stencil is evaluated in extended precision.
    """
    if n_max < 0:
        raise OutOfRangeError("n_max must be >= 0")
    worst = (0.0, 0.0, 0.0, {})
    hl = _LD(FD_STEP)
    for m in range(n_max + 1):
        for z in z_grid:
            if z <= 0:
                raise OutOfRangeError("z grid must be positive")
            zl = _LD(z)
            zc = _LD(max(1.0, float(z)))

            def f(n: np.ndarray, m: int = m, zc: _LD = zc) -> np.ndarray:
                return (n / zc) ** m

            g_here = _poisson_average(z, f, m)

            # lowering: G(af)(z) vs z * Gf(z)
            low_lhs = _poisson_average(
                z, lambda n: n * (np.where(n > 0, n - 1, 0) / zc) ** m, m + 1)
            low_rhs = zl * g_here
            err_low = abs(float(low_lhs - low_rhs))

            # raising: G(a'f)(z) vs (d/dz + 1) Gf(z), Richardson-extrapolated
            raise_lhs = _poisson_average(z, lambda n: ((n + 1) / zc) ** m, m)
            d_h = (_poisson_average(zl + hl, f, m)
                   - _poisson_average(zl - hl, f, m)) / (2 * hl)
            d_h2 = (_poisson_average(zl + hl / 2, f, m)
                    - _poisson_average(zl - hl / 2, f, m)) / hl
            deriv = (4 * d_h2 - d_h) / 3
            raise_rhs = deriv + g_here
            err_raise = abs(float(raise_lhs - raise_rhs))

            for tag, err, lhs, rhs in (("lowering", err_low, low_lhs, low_rhs),
                                       ("raising", err_raise, raise_lhs, raise_rhs)):
                if err > worst[0]:
                    worst = (err, float(lhs), float(rhs),
                             {"identity": tag, "m": m, "z": z})

    err, lhs, rhs, at = worst
    return _report(
        "poisson-intertwiner",
        {"n_max": n_max, "z_grid": list(z_grid)},
        lhs, rhs, tol, abs_error=err,
        detail={"worst_case": at, "fd_step": FD_STEP,
                "richardson_order": RICHARDSON_ORDER,
                "monomial_scale": "f(n) = (n / max(1, z))^m",
                "truncation": "pmf*(n+1)^deg < 1e-18 * running magnitude"},
    )


# --- Monte Carlo mixture duality ------------------------------------------------------

_DUAL_OF = {
    Family.KMP_DISCRETE: Family.KMP_DISCRETE,
    Family.KMP_CONTINUOUS: Family.KMP_DISCRETE,
    Family.HARMONIC_DISCRETE: Family.HARMONIC_DISCRETE,
    Family.HARMONIC_CONTINUOUS: Family.HARMONIC_DISCRETE,
}
_HIDDEN_OF = {
    Family.KMP_DISCRETE: Family.HIDDEN_KMP,
    Family.KMP_CONTINUOUS: Family.HIDDEN_KMP,
    Family.HARMONIC_DISCRETE: Family.HIDDEN_HARMONIC,
    Family.HARMONIC_CONTINUOUS: Family.HIDDEN_HARMONIC,
}


def mc_mixture_duality(
    graph: Graph,
    model_pair: tuple[Family, Family],
    xi: DualIndex,
    theta_init,
    t: float,
    n_traj: int,
    stream: RngStream,
    two_s: float = 1.0,
    epsilon: float | None = None,
    workers: int | None = None,
) -> IdentityReport:
    """Two Monte Carlo routes to E[prod theta^xi] after time t.

    Route 1 runs the dual particle dynamics from xi and averages
    prod theta_init^{xi(t)}; route 2 runs the hidden parameter model from
    theta_init and averages prod theta(t)^{xi}.  Semigroup duality makes
    these expectations equal; the check passes when they agree within 3
    combined standard errors.
    """
    primary, hidden = Family(model_pair[0]), Family(model_pair[1])
    if primary not in _DUAL_OF or _HIDDEN_OF[primary] is not hidden:
        raise UnsupportedModelError(
            f"unsupported pair ({primary.value}, {hidden.value}); the hidden "
            "partner must match the primary family"
        )
    if xi.order > 4:
        raise OutOfRangeError("|xi| must be <= 4 to keep estimator variance sane")

    dual_family = _DUAL_OF[primary]
    theta_vec = (theta_init.to_array(graph) if isinstance(theta_init, StateVector)
                 else np.asarray(theta_init, dtype=np.float64))
    if theta_vec.shape != (graph.n,):
        raise OutOfRangeError(f"theta_init must have shape ({graph.n},)")
    xi_vec = xi.to_array(graph)

    dual_spec = ModelSpec(family=dual_family, two_s=two_s, reservoirs={})
    hidden_spec = ModelSpec(family=hidden, two_s=two_s, reservoirs={})

    theta_const = theta_vec.copy()

    def dual_obs(state: np.ndarray) -> float:
        val = 1.0
        for i in np.nonzero(state)[0]:
            val *= theta_const[i] ** state[i]
        return float(val)

    side1 = ensemble_at(graph, dual_spec, xi_vec.astype(np.float64), t, n_traj,
                        dual_obs, stream.child(0), observable_name="dual-particles",
                        workers=workers)
    side2 = ensemble_at(graph, hidden_spec, theta_vec, t, n_traj,
                        power_observable(xi_vec), stream.child(1),
                        observable_name="hidden-parameters",
                        epsilon=epsilon, workers=workers)

    se = math.hypot(side1.se, side2.se)
    diff = abs(side1.mean - side2.mean)
    return IdentityReport(
        name="mc-mixture-duality",
        params={"pair": [primary.value, hidden.value], "xi": list(map(int, xi_vec)),
                "theta_init": [float(x) for x in theta_vec], "t": float(t),
                "n_traj": int(n_traj), "two_s": two_s, "epsilon": epsilon},
        lhs=side1.mean, rhs=side2.mean,
        abs_error=diff, tol=3.0 * se, passed=bool(diff <= 3.0 * se or se == 0.0),
        detail={"se": [side1.se, side2.se], "combined_se": se,
                "stream": stream.label()},
    )


# --- the deterministic suite ----------------------------------------------------------

TWO_S_GRID = (0.25, 0.5, 1.0, 2.0, 3.5)
THETA_GRID_EDGE = (0.0, 0.5, 1.5, 3.0)
THETA_GRID_RESERVOIR = (0.0, 0.35, 0.8, 1.2)


def run_identity_suite(
    two_s_grid: Sequence[float] = TWO_S_GRID,
    edge_tol: float = 1e-10,
    moment_tol: float = 1e-10,
    reservoir_tol: float = 1e-10,
    poisson_tol: float = 1e-6,
    redistribution_tol: float = 1e-9,
) -> list[IdentityReport]:
    """All deterministic identity checks on their acceptance grids.

    Covers: edge duality (|xi| <= 10, theta in [0,3]^2), the moment
    relation (n <= 20, 1 <= k <= n), both reservoir intertwinings
    (n <= 40), the Poisson ladder algebra (m <= 8), and the directed
    redistribution duality, across two_s in ``two_s_grid``.
    """
    reports: list[IdentityReport] = []

    for two_s in two_s_grid:
        for total in range(0, 11):
            for xi_i in range(total + 1):
                xi_j = total - xi_i
                for th_i in THETA_GRID_EDGE:
                    for th_j in THETA_GRID_EDGE:
                        reports.append(check_kmp_edge_duality(
                            (xi_i, xi_j), (th_i, th_j), two_s, tol=edge_tol))

    for two_s in two_s_grid:
        for n in range(1, 21):
            for k in range(1, n + 1):
                reports.append(check_moment_relation(n, k, two_s=two_s,
                                                     tol=moment_tol))

    for family in ("kmp", "harmonic"):
        for two_s in two_s_grid:
            for n in range(0, 41):
                for th in THETA_GRID_RESERVOIR:
                    for ts in THETA_GRID_RESERVOIR:
                        reports.append(check_reservoir_intertwining(
                            n, th, ts, two_s, family, tol=reservoir_tol))

    reports.append(check_poisson_intertwiner(tol=poisson_tol))

    for two_s in (0.5, 1.0, 2.0):
        for y in ((0.3, 1.1), (1.0, 1.0)):
            for th in ((0.2, 0.9), (1.0, 0.4)):
                reports.append(check_mass_redistribution_duality(
                    y, th, two_s, tol=redistribution_tol))

    return reports


def suite_summary(reports: Iterable[IdentityReport]) -> dict[str, Any]:
    """Aggregate counts and worst error per identity name."""
    by_name: dict[str, dict[str, Any]] = {}
    for r in reports:
        slot = by_name.setdefault(r.name, {"checks": 0, "failures": 0,
                                           "max_abs_error": 0.0})
        slot["checks"] += 1
        slot["failures"] += 0 if r.passed else 1
        slot["max_abs_error"] = max(slot["max_abs_error"], r.abs_error)
    return {
        "identities": by_name,
        "total_checks": sum(s["checks"] for s in by_name.values()),
        "total_failures": sum(s["failures"] for s in by_name.values()),
        "all_passed": all(s["failures"] == 0 for s in by_name.values()),
    }
