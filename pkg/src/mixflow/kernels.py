"""Single-event transition kernels and jump-rate builders.

Each function applies (or prices) one event of one model family.  The
random kernels consume draws through the ``draw_*`` primitives from
:mod:`mixflow.distributions`, so they stay draw-for-draw compatible with
the compiled simulation core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    bulk_jump_rate,
    discrete_harmonic_weights,
    draw_beta_symmetric,
    draw_binomial,
    draw_bulk_jump,
    draw_gamma,
    draw_input_jump,
    draw_poisson,
    input_jump_rate,
)
from .errors import NegativeStateError, OutOfRangeError, UnsupportedModelError
from .models import Family, Graph, ModelSpec, ReservoirKind

__all__ = [
    "kmp_discrete_edge_apply",
    "kmp_continuous_edge_apply",
    "kmp_hidden_edge_apply",
    "kmp_reservoir_apply",
    "kmp_discrete_reservoir_apply",
    "kmp_hidden_reservoir_apply",
    "harmonic_mass_move",
    "harmonic_hidden_update",
    "harmonic_discrete_move",
    "harmonic_edge_apply",
    "harmonic_reservoir_apply",
    "harmonic_hidden_reservoir_apply",
    "sip_rates",
    "irw_rates",
    "irw_vector_field",
    "DriftDiffusion",
    "bep_drift_diffusion",
]


# --- KMP-type kernels -----------------------------------------------------------

def kmp_discrete_edge_apply(x: int, y: int, two_s: float, gen) -> tuple[int, int]:
    """Redistribute x + y particles across an edge by a beta-binomial split.

    (0, 0) maps to (0, 0) without consuming randomness.
    """
    n = int(x) + int(y)
    if n == 0:
        return 0, 0
    b = draw_beta_symmetric(gen, two_s)
    k = draw_binomial(gen, n, b)
    return k, n - k


def kmp_continuous_edge_apply(x: float, y: float, two_s: float, gen) -> tuple[float, float]:
    """Redistribute the mass x + y by a symmetric Beta fraction."""
    tot = x + y
    b = draw_beta_symmetric(gen, two_s)
    xn = b * tot
    return xn, tot - xn


def kmp_hidden_edge_apply(ti: float, tj: float, two_s: float, gen) -> tuple[float, float]:
    """Both hidden parameters collapse onto one Beta-weighted average."""
    b = draw_beta_symmetric(gen, two_s)
    v = b * ti + (1.0 - b) * tj
    return v, v


def kmp_reservoir_apply(x: float, theta_star: float, two_s: float, gen) -> float:
    """Mix the site with a fresh Gamma(two_s, theta_star) parcel, keep a Beta share."""
    y = draw_gamma(gen, two_s) * theta_star if theta_star > 0.0 else 0.0
    b = draw_beta_symmetric(gen, two_s)
    return (x + y) * b


def kmp_discrete_reservoir_apply(x: int, theta_star: float, two_s: float, gen) -> int:
    """Discrete analogue: add a negative-binomial parcel, keep a beta-binomial share."""
    if theta_star > 0.0:
        lam = draw_gamma(gen, two_s) * theta_star
        y = draw_poisson(gen, lam)
    else:
        y = 0
    n = int(x) + y
    if n == 0:
        return 0
    b = draw_beta_symmetric(gen, two_s)
    return draw_binomial(gen, n, b)


def kmp_hidden_reservoir_apply(theta: float, theta_star: float, two_s: float, gen) -> float:
    b = draw_beta_symmetric(gen, two_s)
    return (1.0 - b) * theta + b * theta_star


# --- harmonic-type kernels --------------------------------------------------------

def harmonic_mass_move(
    zi: float, zj: float, two_s: float, epsilon: float, gen
) -> tuple[float, float]:
    """Move a truncated-measure fraction u of site i's mass onto site j."""
    u = draw_bulk_jump(gen, two_s, epsilon)
    delta = u * zi
    return zi - delta, zj + delta


def harmonic_hidden_update(
    ti: float, tj: float, two_s: float, epsilon: float, gen
) -> float:
    """Pull hidden parameter i toward j by a truncated-measure fraction."""
    u = draw_bulk_jump(gen, two_s, epsilon)
    return (1.0 - u) * ti + u * tj


def harmonic_discrete_move(
    ni: int, nj: int, two_s: float, gen, weights: np.ndarray | None = None
) -> tuple[int, int]:
    """Move k of site i's n particles, k drawn proportional to the jump weights."""
    ni = int(ni)
    if ni == 0:
        return ni, int(nj)
    if weights is None:
        weights = discrete_harmonic_weights(ni, two_s)
    elif len(weights) < ni:
        raise OutOfRangeError("weight table shorter than particle count")
    total = 0.0
    for k in range(ni):
        total += weights[k]
    r = gen.random() * total
    acc = 0.0
    k = ni
    for idx in range(ni):
        acc += weights[idx]
        if r < acc:
            k = idx + 1
            break
    return ni - k, int(nj) + k


def harmonic_edge_apply(pair, two_s: float, epsilon: float, family: Family, gen):
    """One symmetric edge event: direction chosen uniformly, then the move.

    For HARMONIC_DISCRETE the jump weights depend only on the source count,
    so no epsilon is involved.
    """
    family = Family(family)
    if family is Family.HARMONIC_CONTINUOUS:
        if gen.random() < 0.5:
            return harmonic_mass_move(pair[0], pair[1], two_s, epsilon, gen)
        b, a = harmonic_mass_move(pair[1], pair[0], two_s, epsilon, gen)
        return a, b
    if family is Family.HIDDEN_HARMONIC:
        if gen.random() < 0.5:
            return (harmonic_hidden_update(pair[0], pair[1], two_s, epsilon, gen), pair[1])
        return (pair[0], harmonic_hidden_update(pair[1], pair[0], two_s, epsilon, gen))
    if family is Family.HARMONIC_DISCRETE:
        if gen.random() < 0.5:
            return harmonic_discrete_move(pair[0], pair[1], two_s, gen)
        b, a = harmonic_discrete_move(pair[1], pair[0], two_s, gen)
        return a, b
    raise UnsupportedModelError(f"harmonic_edge_apply does not handle {family}")


def harmonic_reservoir_apply(
    x: float,
    theta_star: float,
    two_s: float,
    epsilon: float,
    kind: ReservoirKind,
    gen,
) -> float:
    """One particle-reservoir event: exit or input, chosen by their rates.

    The exit part removes a truncated-measure fraction of the site mass.
    STANDARD input adds theta_star times a truncated u^-1 e^-u jump;
    SAMPLED input draws a Gamma(two_s, theta_star) parcel and adds a
    truncated bulk fraction of it.
    """
    kind = ReservoirKind(kind)
    exit_rate = bulk_jump_rate(two_s, epsilon)
    if kind is ReservoirKind.STANDARD:
        input_rate = input_jump_rate(epsilon)
    else:
        input_rate = exit_rate
    r = gen.random() * (exit_rate + input_rate)
    if r < exit_rate:
        u = draw_bulk_jump(gen, two_s, epsilon)
        return (1.0 - u) * x
    if kind is ReservoirKind.STANDARD:
        u = draw_input_jump(gen, epsilon)
        return x + u * theta_star
    u = draw_bulk_jump(gen, two_s, epsilon)
    y = draw_gamma(gen, two_s) * theta_star if theta_star > 0.0 else 0.0
    return x + u * y


def harmonic_hidden_reservoir_apply(
    theta: float, theta_star: float, two_s: float, epsilon: float, gen
) -> float:
    u = draw_bulk_jump(gen, two_s, epsilon)
    return (1.0 - u) * theta + u * theta_star


# --- inclusion / independent-walker rates ------------------------------------------

def _rate_reservoir_params(graph: Graph, spec: ModelSpec):
    for v, specs in spec.reservoirs:
        r = specs[0]
        yield v, graph.coupling(v), r.alpha, r.gamma


def _as_count_map(eta, graph: Graph) -> dict:
    if isinstance(eta, dict):
        return eta
    values = getattr(eta, "mapping", None)
    if values is not None:
        return {v: int(n) for v, n in values.items()}
    return {v: int(n) for v, n in zip(graph.vertices, np.asarray(eta).ravel())}


def sip_rates(eta, graph: Graph, spec: ModelSpec) -> list[tuple[tuple, float]]:
    """All positive event rates of the inclusion process at configuration eta.

    Events are ('move', i, j), ('birth', i), ('death', i); moves attract
    with strength 2s + occupation of the target site.
    """
    eta = _as_count_map(eta, graph)
    s2 = spec.two_s
    out: list[tuple[tuple, float]] = []
    for i, j, w in graph.edges:
        ni, nj = eta[i], eta[j]
        if ni < 0 or nj < 0:
            raise NegativeStateError("negative occupation")
        r_ij = w * ni * (s2 + nj)
        r_ji = w * nj * (s2 + ni)
        if r_ij > 0:
            out.append((("move", i, j), r_ij))
        if r_ji > 0:
            out.append((("move", j, i), r_ji))
    for v, c, alpha, gamma in _rate_reservoir_params(graph, spec):
        n = eta[v]
        birth = c * alpha * (s2 + n)
        death = c * gamma * n
        if birth > 0:
            out.append((("birth", v), birth))
        if death > 0:
            out.append((("death", v), death))
    return out


def irw_rates(eta, graph: Graph, spec: ModelSpec) -> list[tuple[tuple, float]]:
    """Independent-walker rates: each particle hops at the edge weight."""
    eta = _as_count_map(eta, graph)
    out: list[tuple[tuple, float]] = []
    for i, j, w in graph.edges:
        ni, nj = eta[i], eta[j]
        if ni < 0 or nj < 0:
            raise NegativeStateError("negative occupation")
        if w * ni > 0:
            out.append((("move", i, j), w * ni))
        if w * nj > 0:
            out.append((("move", j, i), w * nj))
    for v, c, alpha, gamma in _rate_reservoir_params(graph, spec):
        n = eta[v]
        if c * alpha > 0:
            out.append((("birth", v), c * alpha))
        if c * gamma * n > 0:
            out.append((("death", v), c * gamma * n))
    return out


def irw_vector_field(z, graph: Graph, spec: ModelSpec) -> np.ndarray:
    """Mean-field drift dz/dt = -L z + c (alpha - gamma z) of the walker density."""
    z = np.asarray(z, dtype=float)
    out = -graph.laplacian() @ z
    for v, c, alpha, gamma in _rate_reservoir_params(graph, spec):
        i = graph.index[v]
        out[i] += c * (alpha - gamma * z[i])
    return out


# --- energy-exchange diffusion -------------------------------------------------------

@dataclass(frozen=True)
class DriftDiffusion:
    """Drift vector and noise variances of the energy-exchange diffusion.

    Edge noise is antisymmetric: edge e contributes +sqrt(edge_var[e]) dW_e
    at its first site and the opposite at its second, conserving bulk mass.
    Reservoir noise acts on single sites.
    """

    drift: np.ndarray
    edge_sites: np.ndarray          # (E, 2) int
    edge_var: np.ndarray            # (E,)  2 w zeta_i zeta_j
    reservoir_var: np.ndarray       # (V,)  2 c alpha zeta

    def total_noise_var(self) -> np.ndarray:
        out = np.array(self.reservoir_var, copy=True)
        for (a, b), v in zip(self.edge_sites, self.edge_var):
            out[a] += v
            out[b] += v
        return out


def bep_drift_diffusion(zeta, graph: Graph, spec: ModelSpec) -> DriftDiffusion:
    z = np.asarray(zeta, dtype=float)
    if np.any(z < 0):
        raise NegativeStateError("energies must be >= 0")
    s2 = spec.two_s
    ei, ej, w = graph.edge_arrays()
    drift = np.zeros(graph.n)
    edge_var = np.empty(len(w))
    for k in range(len(w)):
        a, b = ei[k], ej[k]
        drift[a] += s2 * w[k] * (z[b] - z[a])
        drift[b] += s2 * w[k] * (z[a] - z[b])
        edge_var[k] = 2.0 * w[k] * z[a] * z[b]
    res_var = np.zeros(graph.n)
    for v, c, alpha, gamma in _rate_reservoir_params(graph, spec):
        i = graph.index[v]
        drift[i] += c * (s2 * alpha - (gamma - alpha) * z[i])
        res_var[i] = 2.0 * c * alpha * z[i]
    return DriftDiffusion(
        drift=drift,
        edge_sites=np.stack([ei, ej], axis=1) if len(w) else np.zeros((0, 2), dtype=np.int64),
        edge_var=edge_var,
        reservoir_var=res_var,
    )
