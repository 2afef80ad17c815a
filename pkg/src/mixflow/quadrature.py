"""Gaussian quadrature on the unit interval against Beta-type weights.

Identity checks integrate polynomials against densities with endpoint
singularities u^(a-1) (1-u)^(b-1).  Folding the singular factors into a
Gauss-Jacobi rule makes those integrals exact up to floating error.  Each
rule is validated against closed-form Beta moments before first use, so a
bad degree or an inaccurate node set is caught loudly rather than showing
up as a mysterious identity failure.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import betaln, roots_genlaguerre, roots_jacobi

from .errors import QuadratureError

# relative accuracy demanded of monomial moments during self-validation;
# scipy's root finders deliver ~1e-13 for strongly singular weights, so the
# gate sits at 5e-13: loose enough for healthy rules, three orders below
# the tightest identity tolerance (1e-10)
_VALIDATE_RTOL = 5e-13


@lru_cache(maxsize=256)
def unit_jacobi_rule(n_nodes: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights u_i, w_i with  sum w_i g(u_i) = ∫₀¹ g(u) u^(a-1) (1-u)^(b-1) du.

    Exact for polynomials g of degree <= 2 n_nodes - 1.  Requires a, b > 0.
    The rule is checked against log-Gamma Beta moments up to degree
    min(2 n_nodes - 1, 12) at 1e-13 relative accuracy.
    """
    if n_nodes < 1:
        raise QuadratureError("need at least one node")
    if not (a > 0 and b > 0):
        raise QuadratureError(f"weight exponents must be positive, got a={a}, b={b}")
    # scipy's Jacobi weight is (1-x)^alpha (1+x)^beta on [-1, 1]; with
    # u = (1+x)/2 the factor u^(a-1) maps to beta = a-1 and (1-u)^(b-1)
    # to alpha = b-1, with a global scale 2^(a+b-1).
    x, w = roots_jacobi(n_nodes, b - 1.0, a - 1.0)
    u = 0.5 * (x + 1.0)
    w = w * 0.5 ** (a + b - 1.0)

    max_deg = min(2 * n_nodes - 1, 12)
    for m in range(max_deg + 1):
        got = float(np.sum(w * u**m))
        want = float(np.exp(betaln(a + m, b)))
        if abs(got - want) > _VALIDATE_RTOL * abs(want):
            raise QuadratureError(
                f"Gauss-Jacobi rule (n={n_nodes}, a={a}, b={b}) fails moment "
                f"m={m}: got {got!r}, want {want!r}"
            )
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


@lru_cache(maxsize=64)
def laguerre_rule(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights with  sum w_i g(u_i) = ∫₀^∞ g(u) e^(-u) du.

    Exact for polynomials of degree <= 2 n_nodes - 1; validated against
    factorial moments up to degree min(2 n_nodes - 1, 12).
    """
    if n_nodes < 1:
        raise QuadratureError("need at least one node")
    u, w = roots_genlaguerre(n_nodes, 0.0)
    max_deg = min(2 * n_nodes - 1, 12)
    want = 1.0
    for m in range(max_deg + 1):
        got = float(np.sum(w * u**m))
        if abs(got - want) > _VALIDATE_RTOL * want:
            raise QuadratureError(
                f"Gauss-Laguerre rule (n={n_nodes}) fails moment m={m}: "
                f"got {got!r}, want {want!r}"
            )
        want *= m + 1
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


def beta_weighted_average(
    g_at, two_s: float, degree: int, extra_nodes: int = 2
) -> np.longdouble:
    """⟨g⟩ under Beta(two_s, two_s), for polynomial g of known degree.

    ``g_at`` is called with the node vector and must return values (any
    dtype promotable to longdouble).  Normalising by the quadrature's own
    total mass instead of a closed-form Beta function cancels the common
    scale error of the weights.
    """
    n_nodes = max((degree + 2) // 2, 1) + extra_nodes
    u, w = unit_jacobi_rule(n_nodes, two_s, two_s)
    wl = w.astype(np.longdouble)
    vals = np.asarray(g_at(u), dtype=np.longdouble)
    return (wl * vals).sum() / wl.sum()
