"""Lowering of validated models into the dense arrays the run loops consume.

Both the pure-Python and the compiled loop implementations receive exactly
these arrays, so event ordering (and hence the consumed random stream) is
identical across lanes by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..distributions import (
    bulk_jump_rate,
    discrete_harmonic_weights,
    input_jump_rate,
)
from ..errors import BadEpsilonError, UnsupportedModelError
from ..models import Family, Graph, ModelSpec, ReservoirKind

# event-class codes for the constant-rate driver
CK_KMP_EDGE_D = 0    # beta-binomial split of the two site counts
CK_KMP_EDGE_C = 1    # Beta split of the two site masses
CK_KMP_EDGE_H = 2    # both hidden parameters -> Beta-weighted average
CK_KMP_RES_P = 3     # (x + Gamma parcel) * Beta share
CK_KMP_RES_PD = 4    # discrete reservoir: NB parcel + beta-binomial share
CK_KMP_RES_H = 5     # hidden: theta -> (1-B) theta + B theta*
CK_HARM_MOVE = 6     # move bulk fraction of site a onto site b
CK_HARM_HID = 7      # hidden: theta_a -> (1-u) theta_a + u theta_b
CK_HARM_EXIT = 8     # exit: x -> (1-u) x
CK_HARM_IN_STD = 9   # input: x += u theta*, u from the u^-1 e^-u tail
CK_HARM_IN_SMP = 10  # input: x += u * Gamma parcel, u from the bulk measure
CK_HARM_RES_H = 11   # hidden reservoir: theta -> (1-u) theta + u theta*

# event-class codes for the state-dependent driver
SK_MOVE = 0
SK_BIRTH = 1
SK_DEATH = 2

FAM_SIP = 0
FAM_IRW = 1
FAM_DH = 2

_CONSTANT_FAMILIES = {
    Family.KMP_DISCRETE,
    Family.KMP_CONTINUOUS,
    Family.HIDDEN_KMP,
    Family.HARMONIC_CONTINUOUS,
    Family.HIDDEN_HARMONIC,
}
_STATEDEP_FAMILIES = {Family.SIP, Family.IRW, Family.HARMONIC_DISCRETE}


@dataclass(frozen=True)
class ConstantRatePlan:
    """Event classes of a model whose total jump rate never changes."""

    kinds: np.ndarray      # int8 (C,)
    site_a: np.ndarray     # int64 (C,)
    site_b: np.ndarray     # int64 (C,)
    param: np.ndarray      # float64 (C,)  reservoir target, 0 if unused
    rates: np.ndarray      # float64 (C,)
    two_s: float
    epsilon: float

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())


@dataclass(frozen=True)
class StateDependentPlan:
    """Event classes plus incidence lists for locally updated jump rates."""

    family_code: int
    kinds: np.ndarray      # int8 (C,)
    site_a: np.ndarray     # int64 (C,)
    site_b: np.ndarray     # int64 (C,)
    coef: np.ndarray       # float64 (C,)
    inc_ptr: np.ndarray    # int64 (V+1,)
    inc_idx: np.ndarray    # int64 (nnz,)
    two_s: float


@lru_cache(maxsize=64)
def harmonic_count_tables(max_total: int, two_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Flattened cumulative jump-weight tables for counts 0..max_total.

    Returns (cum, totals): for n >= 1 the slice cum[n(n-1)/2 : n(n+1)/2]
    holds the running sums of the weights w(1..n, n); totals[n] is the full
    sum, i.e. the rate factor of an edge whose source holds n particles.
    """
    cum = np.zeros(max_total * (max_total + 1) // 2, dtype=np.float64)
    totals = np.zeros(max_total + 1, dtype=np.float64)
    for n in range(1, max_total + 1):
        w = discrete_harmonic_weights(n, two_s)
        off = n * (n - 1) // 2
        cum[off:off + n] = np.cumsum(w)
        totals[n] = cum[off + n - 1]
    cum.setflags(write=False)
    totals.setflags(write=False)
    return cum, totals


def _reservoir_entries(graph: Graph, spec: ModelSpec):
    for v, specs in spec.reservoirs:
        c = graph.coupling(v)
        for r in specs:
            yield graph.index[v], c, r


def build_constant_plan(graph: Graph, spec: ModelSpec, epsilon: float | None) -> ConstantRatePlan:
    fam = spec.family
    if fam not in _CONSTANT_FAMILIES:
        raise UnsupportedModelError(f"{fam.value} has state-dependent rates")
    if fam.needs_epsilon:
        if epsilon is None:
            raise BadEpsilonError(f"{fam.value} requires a truncation epsilon")
        lam_bulk = bulk_jump_rate(spec.two_s, epsilon)
    else:
        epsilon = 0.0 if epsilon is None else epsilon
        lam_bulk = 0.0

    kinds: list[int] = []
    sa: list[int] = []
    sb: list[int] = []
    par: list[float] = []
    rates: list[float] = []

    def add(kind: int, a: int, b: int, p: float, rate: float) -> None:
        if rate <= 0:
            return
        kinds.append(kind)
        sa.append(a)
        sb.append(b)
        par.append(p)
        rates.append(rate)

    ei, ej, w = graph.edge_arrays()
    for k in range(len(w)):
        a, b = int(ei[k]), int(ej[k])
        if fam is Family.KMP_DISCRETE:
            add(CK_KMP_EDGE_D, a, b, 0.0, w[k])
        elif fam is Family.KMP_CONTINUOUS:
            add(CK_KMP_EDGE_C, a, b, 0.0, w[k])
        elif fam is Family.HIDDEN_KMP:
            add(CK_KMP_EDGE_H, a, b, 0.0, w[k])
        elif fam is Family.HARMONIC_CONTINUOUS:
            add(CK_HARM_MOVE, a, b, 0.0, w[k] * lam_bulk)
            add(CK_HARM_MOVE, b, a, 0.0, w[k] * lam_bulk)
        else:
            add(CK_HARM_HID, a, b, 0.0, w[k] * lam_bulk)
            add(CK_HARM_HID, b, a, 0.0, w[k] * lam_bulk)

    sampled = spec.harmonic_reservoir_kind is ReservoirKind.SAMPLED
    for a, c, r in _reservoir_entries(graph, spec):
        t_star = r.theta_star
        if fam is Family.KMP_DISCRETE:
            add(CK_KMP_RES_PD, a, -1, t_star, c)
        elif fam is Family.KMP_CONTINUOUS:
            add(CK_KMP_RES_P, a, -1, t_star, c)
        elif fam is Family.HIDDEN_KMP:
            add(CK_KMP_RES_H, a, -1, t_star, c)
        elif fam is Family.HARMONIC_CONTINUOUS:
            add(CK_HARM_EXIT, a, -1, 0.0, c * lam_bulk)
            if sampled:
                add(CK_HARM_IN_SMP, a, -1, t_star, c * lam_bulk)
            else:
                add(CK_HARM_IN_STD, a, -1, t_star, c * input_jump_rate(epsilon))
        else:
            add(CK_HARM_RES_H, a, -1, t_star, c * lam_bulk)

    return ConstantRatePlan(
        kinds=np.array(kinds, dtype=np.int8),
        site_a=np.array(sa, dtype=np.int64),
        site_b=np.array(sb, dtype=np.int64),
        param=np.array(par, dtype=np.float64),
        rates=np.array(rates, dtype=np.float64),
        two_s=spec.two_s,
        epsilon=float(epsilon),
    )


def build_statedep_plan(graph: Graph, spec: ModelSpec) -> StateDependentPlan:
    fam = spec.family
    if fam not in _STATEDEP_FAMILIES:
        raise UnsupportedModelError(f"{fam.value} is not a state-dependent jump family")
    family_code = {Family.SIP: FAM_SIP, Family.IRW: FAM_IRW,
                   Family.HARMONIC_DISCRETE: FAM_DH}[fam]

    kinds: list[int] = []
    sa: list[int] = []
    sb: list[int] = []
    coef: list[float] = []
    depends: list[tuple[int, ...]] = []

    ei, ej, w = graph.edge_arrays()
    for k in range(len(w)):
        a, b = int(ei[k]), int(ej[k])
        for src, dst in ((a, b), (b, a)):
            kinds.append(SK_MOVE)
            sa.append(src)
            sb.append(dst)
            coef.append(float(w[k]))
            # SIP move rates depend on both endpoint occupations
            depends.append((src, dst) if fam is Family.SIP else (src,))

    for a, c, r in _reservoir_entries(graph, spec):
        kinds.append(SK_BIRTH)
        sa.append(a)
        sb.append(-1)
        coef.append(c * r.alpha)
        depends.append((a,) if fam is Family.SIP else ())
        kinds.append(SK_DEATH)
        sa.append(a)
        sb.append(-1)
        coef.append(c * r.gamma)
        depends.append((a,))

    n_class = len(kinds)
    by_site: list[list[int]] = [[] for _ in range(graph.n)]
    for ci in range(n_class):
        for v in depends[ci]:
            by_site[v].append(ci)
    inc_ptr = np.zeros(graph.n + 1, dtype=np.int64)
    inc_idx: list[int] = []
    for v in range(graph.n):
        inc_idx.extend(by_site[v])
        inc_ptr[v + 1] = len(inc_idx)

    return StateDependentPlan(
        family_code=family_code,
        kinds=np.array(kinds, dtype=np.int8),
        site_a=np.array(sa, dtype=np.int64),
        site_b=np.array(sb, dtype=np.int64),
        coef=np.array(coef, dtype=np.float64),
        inc_ptr=inc_ptr,
        inc_idx=np.array(inc_idx, dtype=np.int64),
        two_s=spec.two_s,
    )


@dataclass(frozen=True)
class DiffusionPlan:
    """Dense arrays for the energy-exchange Euler-Maruyama stepper."""

    edge_i: np.ndarray     # int64 (E,)
    edge_j: np.ndarray     # int64 (E,)
    edge_w: np.ndarray     # float64 (E,)
    res_c: np.ndarray      # float64 (V,) coupling, 0 when no reservoir
    res_alpha: np.ndarray  # float64 (V,)
    res_gamma: np.ndarray  # float64 (V,)
    two_s: float


def build_diffusion_plan(graph: Graph, spec: ModelSpec) -> DiffusionPlan:
    if spec.family is not Family.BEP:
        raise UnsupportedModelError(f"{spec.family.value} is not a diffusion family")
    ei, ej, w = graph.edge_arrays()
    res_c = np.zeros(graph.n)
    res_a = np.zeros(graph.n)
    res_g = np.zeros(graph.n)
    for a, c, r in _reservoir_entries(graph, spec):
        res_c[a] = c
        res_a[a] = r.alpha
        res_g[a] = r.gamma
    return DiffusionPlan(
        edge_i=ei, edge_j=ej, edge_w=w,
        res_c=res_c, res_alpha=res_a, res_gamma=res_g,
        two_s=spec.two_s,
    )
