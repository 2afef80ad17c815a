"""Model descriptions: weighted graphs, family parameters, states, dual indices.

A model is a finite undirected weighted graph together with a family tag
(which transport dynamics run on it), the shape parameter ``two_s``, and
boundary reservoirs attached to vertices with positive coupling.  All
simulation and verification code consumes the validated form produced by
:func:`validate_model`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadShapeError,
    DuplicateVertexError,
    GraphError,
    KindMismatchError,
    ModelJsonError,
    NegativeWeightError,
    NotIrreducibleError,
    OutOfRangeError,
    ReservoirMismatchError,
    UnsupportedModelError,
)

Vertex = Hashable


class Family(str, Enum):
    """Dynamics family run on the graph."""

    KMP_DISCRETE = "KMP_DISCRETE"
    KMP_CONTINUOUS = "KMP_CONTINUOUS"
    HARMONIC_DISCRETE = "HARMONIC_DISCRETE"
    HARMONIC_CONTINUOUS = "HARMONIC_CONTINUOUS"
    HIDDEN_KMP = "HIDDEN_KMP"
    HIDDEN_HARMONIC = "HIDDEN_HARMONIC"
    SIP = "SIP"
    BEP = "BEP"
    IRW = "IRW"
    IRW_FLOW = "IRW_FLOW"

    @property
    def hidden(self) -> bool:
        return self in (Family.HIDDEN_KMP, Family.HIDDEN_HARMONIC)

    @property
    def state_kind(self) -> "StateKind":
        if self in (Family.KMP_DISCRETE, Family.HARMONIC_DISCRETE, Family.SIP, Family.IRW):
            return StateKind.COUNTS
        if self.hidden:
            return StateKind.THETAS
        return StateKind.MASSES

    @property
    def uses_rate_reservoirs(self) -> bool:
        """True when reservoirs are birth/death pairs (alpha, gamma)."""
        return self in (Family.SIP, Family.BEP, Family.IRW, Family.IRW_FLOW)

    @property
    def needs_epsilon(self) -> bool:
        """True when simulation requires a jump-size truncation threshold."""
        return self in (Family.HARMONIC_CONTINUOUS, Family.HIDDEN_HARMONIC)


class ReservoirKind(str, Enum):
    """How a harmonic-family particle reservoir injects mass."""

    STANDARD = "STANDARD"
    SAMPLED = "SAMPLED"


class StateKind(str, Enum):
    COUNTS = "COUNTS"
    MASSES = "MASSES"
    THETAS = "THETAS"


@dataclass(frozen=True)
class ReservoirSpec:
    """Boundary driving at one vertex.

    Exactly one parameterisation applies: a target ``theta_star`` (used by
    the KMP/harmonic families and their hidden companions) or birth/death
    rates ``alpha``/``gamma`` (used by SIP, BEP and IRW).
    """

    theta_star: float | None = None
    alpha: float | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        has_target = self.theta_star is not None
        has_rates = self.alpha is not None or self.gamma is not None
        if has_target == has_rates:
            raise ReservoirMismatchError(
                "reservoir needs either theta_star or the (alpha, gamma) pair"
            )
        if has_rates and (self.alpha is None or self.gamma is None):
            raise ReservoirMismatchError("alpha and gamma must be given together")
        if has_target and self.theta_star < 0:
            raise OutOfRangeError("theta_star must be >= 0")
        if has_rates and (self.alpha < 0 or self.gamma < 0):
            raise OutOfRangeError("alpha and gamma must be >= 0")

    @property
    def has_target(self) -> bool:
        return self.theta_star is not None


@dataclass(frozen=True)
class Graph:
    """Finite undirected weighted graph with vertex couplings.

    ``edges`` stores each undirected edge once, in canonical orientation
    (lower vertex index first).  ``couplings`` lists only vertices with a
    nonzero coupling strength c(i) toward their reservoir.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[tuple[Vertex, Vertex, float], ...]
    couplings: tuple[tuple[Vertex, float], ...] = ()

    @cached_property
    def index(self) -> dict[Vertex, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def _weights(self) -> dict[tuple[int, int], float]:
        idx = self.index
        return {(idx[i], idx[j]): w for i, j, w in self.edges}

    @cached_property
    def _couplings(self) -> dict[Vertex, float]:
        return dict(self.couplings)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def weight(self, i: Vertex, j: Vertex) -> float:
        a, b = self.index[i], self.index[j]
        if a > b:
            a, b = b, a
        return self._weights.get((a, b), 0.0)

    def coupling(self, i: Vertex) -> float:
        return self._couplings.get(i, 0.0)

    def neighbors(self, i: Vertex) -> list[Vertex]:
        a = self.index[i]
        out = []
        for (p, q), _w in self._weights.items():
            if p == a:
                out.append(self.vertices[q])
            elif q == a:
                out.append(self.vertices[p])
        return out

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense (i_index, j_index, weight) arrays for the simulation core."""
        if not self.edges:
            z = np.zeros(0, dtype=np.int64)
            return z, z.copy(), np.zeros(0, dtype=np.float64)
        idx = self.index
        ei = np.array([idx[i] for i, _j, _w in self.edges], dtype=np.int64)
        ej = np.array([idx[j] for _i, j, _w in self.edges], dtype=np.int64)
        w = np.array([w for _i, _j, w in self.edges], dtype=np.float64)
        return ei, ej, w

    def coupling_array(self) -> np.ndarray:
        c = np.zeros(self.n, dtype=np.float64)
        for v, cv in self.couplings:
            c[self.index[v]] = cv
        return c

    def laplacian(self) -> np.ndarray:
        """Graph Laplacian L with L[i,j] = -w(i,j) off-diagonal."""
        lap = np.zeros((self.n, self.n))
        ei, ej, w = self.edge_arrays()
        for a, b, wv in zip(ei, ej, w):
            lap[a, b] -= wv
            lap[b, a] -= wv
            lap[a, a] += wv
            lap[b, b] += wv
        return lap


def build_graph(
    vertices: Iterable[Vertex],
    edges: Iterable[Sequence[Any]] = (),
    couplings: Iterable[Sequence[Any]] = (),
) -> Graph:
    """Validate and canonicalise a graph description.

    Edges may be given in either orientation but each unordered pair at
    most once; conflicting duplicate weights are rejected rather than
    merged.  Zero-weight edges are dropped.  The positive-weight edge set
    must connect all vertices (a single vertex is trivially connected).
    """
    verts = tuple(vertices)
    seen: set[Vertex] = set()
    for v in verts:
        if v in seen:
            raise DuplicateVertexError(f"duplicate vertex {v!r}")
        seen.add(v)
    if not verts:
        raise GraphError("graph needs at least one vertex")
    index = {v: i for i, v in enumerate(verts)}

    canon: dict[tuple[int, int], float] = {}
    for entry in edges:
        i, j, w = entry
        if i not in index or j not in index:
            raise GraphError(f"edge ({i!r}, {j!r}) references unknown vertex")
        if i == j:
            raise GraphError(f"self-loop at {i!r} not allowed")
        w = float(w)
        if w < 0:
            raise NegativeWeightError(f"edge ({i!r}, {j!r}) has negative weight {w}")
        a, b = index[i], index[j]
        if a > b:
            a, b = b, a
        if (a, b) in canon:
            raise GraphError(f"edge ({i!r}, {j!r}) given more than once")
        canon[(a, b)] = w

    coup: dict[Vertex, float] = {}
    for entry in couplings:
        v, c = entry
        if v not in index:
            raise GraphError(f"coupling references unknown vertex {v!r}")
        if v in coup:
            raise GraphError(f"coupling for {v!r} given more than once")
        c = float(c)
        if c < 0:
            raise NegativeWeightError(f"coupling at {v!r} is negative: {c}")
        if c > 0:
            coup[v] = c

    # connectivity over positive-weight edges
    adj: dict[int, list[int]] = {i: [] for i in range(len(verts))}
    for (a, b), w in canon.items():
        if w > 0:
            adj[a].append(b)
            adj[b].append(a)
    reached = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in reached:
                reached.add(nb)
                stack.append(nb)
    if len(reached) != len(verts):
        missing = [verts[i] for i in range(len(verts)) if i not in reached]
        raise NotIrreducibleError(f"graph not connected; unreachable: {missing!r}")

    edge_tuple = tuple(
        (verts[a], verts[b], canon[(a, b)])
        for (a, b) in sorted(canon)
        if canon[(a, b)] > 0
    )
    coup_tuple = tuple((v, coup[v]) for v in verts if v in coup)
    return Graph(vertices=verts, edges=edge_tuple, couplings=coup_tuple)


def chain_graph(n: int, edge_weight: float = 1.0, coupling: float = 1.0) -> Graph:
    """Path graph on vertices 1..n with boundary couplings at both ends.

    For ``n == 1`` the single vertex carries the (sole) boundary coupling;
    both reservoirs of a boundary-driven chain then attach to it.
    """
    if n < 1:
        raise GraphError("chain needs at least one vertex")
    vertices = list(range(1, n + 1))
    edges = [(i, i + 1, edge_weight) for i in range(1, n)]
    if n == 1:
        couplings = [(1, coupling)]
    else:
        couplings = [(1, coupling), (n, coupling)]
    return build_graph(vertices, edges, couplings)


def _normalize_reservoirs(
    reservoirs: Mapping[Vertex, Any]
) -> tuple[tuple[Vertex, tuple[ReservoirSpec, ...]], ...]:
    out = []
    for v, spec in reservoirs.items():
        if isinstance(spec, ReservoirSpec):
            specs: tuple[ReservoirSpec, ...] = (spec,)
        else:
            specs = tuple(spec)
            if not specs or not all(isinstance(s, ReservoirSpec) for s in specs):
                raise ReservoirMismatchError(
                    f"reservoir entry for {v!r} must be a ReservoirSpec or a "
                    "non-empty sequence of them"
                )
        out.append((v, specs))
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    """Family tag plus parameters; validated against a graph separately.

    ``reservoirs`` maps a vertex to one reservoir or to a sequence of
    reservoirs (a single-site boundary-driven chain has both end
    reservoirs attached to its only vertex).
    """

    family: Family
    two_s: float = 1.0
    reservoirs: Any = field(default=())
    harmonic_reservoir_kind: ReservoirKind = ReservoirKind.STANDARD
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(
            self, "harmonic_reservoir_kind", ReservoirKind(self.harmonic_reservoir_kind)
        )
        res = self.reservoirs
        if isinstance(res, Mapping):
            res = _normalize_reservoirs(res)
        else:
            res = tuple((v, specs if isinstance(specs, tuple) else tuple(specs))
                        for v, specs in res)
        object.__setattr__(self, "reservoirs", res)

    @cached_property
    def reservoir_map(self) -> dict[Vertex, tuple[ReservoirSpec, ...]]:
        return dict(self.reservoirs)


def validate_model(graph: Graph, spec: ModelSpec) -> ModelSpec:
    """Cross-check a spec against its graph; returns the validated spec.

    Non-fatal oddities (e.g. SIP/BEP reservoirs with alpha >= gamma, which
    have no finite single-site stationary law) are surfaced through the
    ``warnings`` tuple of the returned spec.
    """
    if not (spec.two_s > 0) or not math.isfinite(spec.two_s):
        raise BadShapeError(f"two_s must be positive and finite, got {spec.two_s}")

    warnings: list[str] = []
    res_map = spec.reservoir_map
    coupled = {v for v, c in graph.couplings if c > 0}

    for v in res_map:
        if v not in graph.index:
            raise ReservoirMismatchError(f"reservoir at unknown vertex {v!r}")
        if v not in coupled:
            raise ReservoirMismatchError(
                f"reservoir at {v!r} but its coupling c({v!r}) is zero"
            )
    for v in coupled:
        if v not in res_map:
            raise ReservoirMismatchError(
                f"coupling c({v!r}) > 0 but no reservoir given for {v!r}"
            )

    for v, specs in res_map.items():
        for r in specs:
            if spec.family.uses_rate_reservoirs:
                if r.has_target:
                    raise ReservoirMismatchError(
                        f"{spec.family.value} reservoir at {v!r} needs (alpha, gamma)"
                    )
                if r.alpha >= r.gamma and r.alpha > 0:
                    warnings.append(
                        f"reservoir at {v!r} has alpha >= gamma; "
                        "no finite single-site stationary law"
                    )
            else:
                if not r.has_target:
                    raise ReservoirMismatchError(
                        f"{spec.family.value} reservoir at {v!r} needs theta_star"
                    )
        if spec.family.uses_rate_reservoirs and len(specs) > 1:
            raise UnsupportedModelError(
                f"multiple birth/death reservoirs at one site ({v!r}) not supported"
            )

    if spec.family is Family.HARMONIC_DISCRETE and res_map:
        raise UnsupportedModelError(
            "boundary driving is not defined for the discrete harmonic family"
        )

    if warnings:
        return replace(spec, warnings=tuple(warnings))
    return spec


@dataclass(frozen=True)
class StateVector:
    """A configuration: per-vertex counts, masses, or hidden parameters."""

    kind: StateKind
    values: tuple[tuple[Vertex, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StateKind(self.kind))
        vals = self.values
        if isinstance(vals, Mapping):
            vals = tuple(vals.items())
        else:
            vals = tuple((v, float(x)) for v, x in vals)
        for v, x in vals:
            if not math.isfinite(x) or x < 0:
                raise OutOfRangeError(f"state value at {v!r} must be finite and >= 0")
            if self.kind is StateKind.COUNTS and x != int(x):
                raise KindMismatchError(f"COUNTS state needs integers, got {x} at {v!r}")
        object.__setattr__(self, "values", vals)

    @cached_property
    def mapping(self) -> dict[Vertex, float]:
        return dict(self.values)

    def to_array(self, graph: Graph) -> np.ndarray:
        arr = np.zeros(graph.n, dtype=np.float64)
        for v, x in self.values:
            arr[graph.index[v]] = x
        return arr

    @classmethod
    def from_array(cls, graph: Graph, kind: StateKind, arr: np.ndarray) -> "StateVector":
        vals = tuple((v, float(arr[i])) for i, v in enumerate(graph.vertices))
        return cls(kind=kind, values=vals)


@dataclass(frozen=True)
class DualIndex:
    """Particle configuration indexing a duality observable (xi in N^V)."""

    xi: tuple[tuple[Vertex, int], ...]

    def __post_init__(self) -> None:
        xi = self.xi
        if isinstance(xi, Mapping):
            xi = tuple(xi.items())
        clean = []
        for v, k in xi:
            k_int = int(k)
            if k_int != k or k_int < 0:
                raise OutOfRangeError(f"dual index at {v!r} must be an integer >= 0")
            clean.append((v, k_int))
        object.__setattr__(self, "xi", tuple(clean))

    @cached_property
    def mapping(self) -> dict[Vertex, int]:
        return dict(self.xi)

    @property
    def order(self) -> int:
        return sum(k for _v, k in self.xi)

    def to_array(self, graph: Graph) -> np.ndarray:
        arr = np.zeros(graph.n, dtype=np.int64)
        for v, k in self.xi:
            arr[graph.index[v]] = k
        return arr


# --- JSON interchange ---------------------------------------------------------

_MODEL_FIELDS = {
    "vertices", "edges", "couplings", "family", "two_s", "reservoirs",
    "harmonic_reservoir_kind",
}
_RES_FIELDS_TARGET = {"theta_star"}
_RES_FIELDS_RATES = {"alpha", "gamma"}


def _reservoir_from_json(obj: Any, where: str) -> ReservoirSpec:
    if not isinstance(obj, dict):
        raise ModelJsonError(f"reservoir entry {where} must be an object")
    keys = set(obj)
    if keys == _RES_FIELDS_TARGET:
        return ReservoirSpec(theta_star=float(obj["theta_star"]))
    if keys == _RES_FIELDS_RATES:
        return ReservoirSpec(alpha=float(obj["alpha"]), gamma=float(obj["gamma"]))
    raise ModelJsonError(
        f"reservoir entry {where} must have exactly theta_star or alpha+gamma, "
        f"got {sorted(keys)}"
    )


def model_from_json(data: Mapping[str, Any]) -> tuple[Graph, ModelSpec]:
    """Parse the model interchange object; unknown fields are rejected."""
    if not isinstance(data, Mapping):
        raise ModelJsonError("model description must be a JSON object")
    unknown = set(data) - _MODEL_FIELDS
    if unknown:
        raise ModelJsonError(f"unknown model fields: {sorted(unknown)}")
    for required in ("vertices", "family"):
        if required not in data:
            raise ModelJsonError(f"model field {required!r} is required")

    vertices = list(data["vertices"])
    try:
        graph = build_graph(vertices, data.get("edges", ()), data.get("couplings", ()))
    except (GraphError, ValueError, TypeError) as exc:
        raise ModelJsonError(f"bad graph data: {exc}") from exc

    by_str: dict[str, Vertex] = {}
    for v in graph.vertices:
        key = str(v)
        if key in by_str:
            raise ModelJsonError(f"vertex labels collide as strings: {key!r}")
        by_str[key] = v

    reservoirs: dict[Vertex, tuple[ReservoirSpec, ...]] = {}
    raw_res = data.get("reservoirs", {})
    if not isinstance(raw_res, Mapping):
        raise ModelJsonError("'reservoirs' must be an object keyed by vertex")
    for key, entry in raw_res.items():
        if key not in by_str:
            raise ModelJsonError(f"reservoir at unknown vertex {key!r}")
        v = by_str[key]
        if isinstance(entry, list):
            specs = tuple(
                _reservoir_from_json(e, f"{key!r}[{i}]") for i, e in enumerate(entry)
            )
        else:
            specs = (_reservoir_from_json(entry, repr(key)),)
        reservoirs[v] = specs

    try:
        family = Family(data["family"])
    except ValueError as exc:
        raise ModelJsonError(f"unknown family {data['family']!r}") from exc
    kind = data.get("harmonic_reservoir_kind", ReservoirKind.STANDARD.value)
    try:
        res_kind = ReservoirKind(kind)
    except ValueError as exc:
        raise ModelJsonError(f"unknown harmonic_reservoir_kind {kind!r}") from exc

    spec = ModelSpec(
        family=family,
        two_s=float(data.get("two_s", 1.0)),
        reservoirs=reservoirs,
        harmonic_reservoir_kind=res_kind,
    )
    try:
        spec = validate_model(graph, spec)
    except (GraphError, ModelJsonError):
        raise
    except Exception as exc:
        raise ModelJsonError(f"invalid model: {exc}") from exc
    return graph, spec


def _reservoir_to_json(spec: ReservoirSpec) -> dict[str, float]:
    if spec.has_target:
        return {"theta_star": spec.theta_star}
    return {"alpha": spec.alpha, "gamma": spec.gamma}


def model_to_json(graph: Graph, spec: ModelSpec) -> dict[str, Any]:
    """Inverse of :func:`model_from_json` (round-trips validated models)."""
    res_obj: dict[str, Any] = {}
    for v, specs in spec.reservoirs:
        entries = [_reservoir_to_json(r) for r in specs]
        res_obj[str(v)] = entries[0] if len(entries) == 1 else entries
    return {
        "vertices": list(graph.vertices),
        "edges": [[i, j, w] for i, j, w in graph.edges],
        "couplings": [[v, c] for v, c in graph.couplings],
        "family": spec.family.value,
        "two_s": spec.two_s,
        "reservoirs": res_obj,
        "harmonic_reservoir_kind": spec.harmonic_reservoir_kind.value,
    }
