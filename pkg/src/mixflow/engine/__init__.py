"""Simulation engine: exact event-driven runs, diffusion stepping, ODE flow.

Two interchangeable lanes implement the run loops: a compiled extension
(``_cysim``, built from Cython) and a pure-Python fallback (``_pysim``).
The compiled lane is used when importable; set ``MIXFLOW_BACKEND=python``
or ``MIXFLOW_BACKEND=compiled`` to force a lane.  Jump-process
trajectories are bit-for-bit identical across lanes for the same stream.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import (
    BadDtError,
    BadEpsilonError,
    BadShapeError,
    KindMismatchError,
    OutOfRangeError,
    RateOverflowError,
    SimulationError,
    SingularSystemError,
    UnsupportedModelError,
)
from ..models import Family, Graph, ModelSpec, StateKind, StateVector, validate_model
from ..rng import RngStream
from . import _pysim
from ._model_arrays import (
    build_constant_plan,
    build_diffusion_plan,
    build_statedep_plan,
    harmonic_count_tables,
)

try:  # pragma: no cover - depends on build environment
    from . import _cysim
except ImportError:  # pragma: no cover
    _cysim = None

_FORCED = os.environ.get("MIXFLOW_BACKEND")
if _FORCED not in (None, "", "python", "compiled"):
    raise ImportError(f"MIXFLOW_BACKEND must be 'python' or 'compiled', got {_FORCED!r}")
if _FORCED == "compiled" and _cysim is None:
    raise ImportError("MIXFLOW_BACKEND=compiled but the extension is not built")

_DEFAULT_LANE = _pysim if _FORCED == "python" or _cysim is None else _cysim

BACKEND = _DEFAULT_LANE.NAME

DEFAULT_RATE_CAP = 1e12
_EVENTS_MAX_DEFAULT = 2_000_000
_GRID_MAX_DEFAULT = 2**62


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if _cysim is not None else ("python",)


def get_lane(name: str | None = None):
    """Return the lane module ('python' or 'compiled'); default lane if None."""
    if name is None:
        return _DEFAULT_LANE
    if name == "python":
        return _pysim
    if name == "compiled":
        if _cysim is None:
            raise UnsupportedModelError("compiled lane is not available")
        return _cysim
    raise OutOfRangeError(f"unknown backend {name!r}")


# --- results -------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Recorded path of one run: times, aligned states, terminal state."""

    graph: Graph
    kind: StateKind
    times: np.ndarray
    states: np.ndarray
    terminal: np.ndarray
    n_events: int
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.states.shape != (len(self.times), self.graph.n):
            raise OutOfRangeError("times/states shape mismatch")

    def state_at(self, row: int) -> StateVector:
        return StateVector.from_array(self.graph, self.kind, self.states[row])

    def to_csv(self, path) -> None:
        """Write 't,<vertex ids...>' rows at full float precision."""
        header = "t," + ",".join(str(v) for v in self.graph.vertices)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for t, row in zip(self.times, self.states):
                fh.write(repr(float(t)) + "," + ",".join(repr(float(x)) for x in row) + "\n")


@dataclass(frozen=True)
class EnsembleSummary:
    """Monte Carlo mean of one observable at one time point."""

    observable: str
    t: float
    mean: float
    se: float
    n: int

    def to_json(self) -> dict[str, Any]:
        return {"observable": self.observable, "t": self.t, "mean": self.mean,
                "se": self.se, "n": self.n}


# --- input handling ---------------------------------------------------------------

def as_state_array(graph: Graph, spec: ModelSpec, init) -> np.ndarray:
    """Validate an initial condition against the family's state kind."""
    want = spec.family.state_kind
    if isinstance(init, StateVector):
        if init.kind is not want:
            raise KindMismatchError(
                f"{spec.family.value} needs a {want.value} state, got {init.kind.value}"
            )
        arr = init.to_array(graph)
    elif isinstance(init, Mapping):
        arr = StateVector(kind=want, values=tuple(init.items())).to_array(graph)
    else:
        arr = np.asarray(init, dtype=np.float64)
        if arr.shape != (graph.n,):
            raise OutOfRangeError(f"initial state must have shape ({graph.n},)")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise OutOfRangeError("initial state must be finite and >= 0")
    if want is StateKind.COUNTS and np.any(arr != np.round(arr)):
        raise KindMismatchError("COUNTS state needs integer values")
    return arr


def _resolve_grid(record, t_end: float):
    """Map the record argument to (grid_array_or_empty, events_mode)."""
    if record is None or (isinstance(record, str) and record == "events"):
        return np.zeros(0, dtype=np.float64), True
    if isinstance(record, (int, float)):
        step = float(record)
        if step <= 0:
            raise OutOfRangeError("record step must be positive")
        n = int(math.floor(t_end / step + 1e-9))
        return np.arange(n + 1, dtype=np.float64) * step, False
    grid = np.asarray(record, dtype=np.float64)
    if grid.ndim != 1 or len(grid) == 0:
        raise OutOfRangeError("record grid must be a non-empty 1-d array")
    if np.any(np.diff(grid) < 0) or grid[0] < 0 or grid[-1] > t_end + 1e-12:
        raise OutOfRangeError("record grid must be sorted within [0, t_end]")
    return grid, False


def _bitgen(stream: RngStream | np.random.Generator):
    if isinstance(stream, RngStream):
        return stream.bit_generator(), stream.label()
    if isinstance(stream, np.random.Generator):
        return stream.bit_generator, "<generator>"
    raise KindMismatchError("stream must be an RngStream or numpy Generator")


def _raise_for_status(status: int) -> None:
    if status == _pysim.STATUS_OK:
        return
    if status == _pysim.STATUS_RECORD_OVERFLOW:
        raise SimulationError("trajectory record capacity exceeded; raise max_events "
                              "or record on a grid")
    if status == _pysim.STATUS_RATE_OVERFLOW:
        raise RateOverflowError("total jump rate exceeded the configured cap "
                                "(runaway configuration?)")
    if status == _pysim.STATUS_MAX_EVENTS:
        raise SimulationError("event budget exhausted before t_end")
    raise SimulationError(f"unknown simulator status {status}")


_JUMP_CONSTANT = {Family.KMP_DISCRETE, Family.KMP_CONTINUOUS, Family.HIDDEN_KMP,
                  Family.HARMONIC_CONTINUOUS, Family.HIDDEN_HARMONIC}
_JUMP_STATEDEP = {Family.SIP, Family.IRW, Family.HARMONIC_DISCRETE}


def simulate(
    graph: Graph,
    spec: ModelSpec,
    init,
    t_end: float,
    stream: RngStream | np.random.Generator,
    *,
    epsilon: float | None = None,
    dt: float | None = None,
    record="events",
    max_events: int | None = None,
    rate_cap: float = DEFAULT_RATE_CAP,
    backend: str | None = None,
) -> Trajectory:
    """Run any supported family from init to t_end and record a trajectory."""
    if t_end < 0 or not math.isfinite(t_end):
        raise OutOfRangeError(f"t_end must be finite and >= 0, got {t_end}")
    spec = validate_model(graph, spec)
    fam = spec.family
    if fam is Family.BEP:
        return em_run(graph, spec, init, t_end, dt, stream, record=record,
                      backend=backend)
    if fam is Family.IRW_FLOW:
        return ode_flow(graph, spec, init, t_end, dt=dt, record=record)

    lane = get_lane(backend)
    state0 = as_state_array(graph, spec, init)
    grid, events_mode = _resolve_grid(record, t_end)
    if max_events is None:
        max_events = _EVENTS_MAX_DEFAULT if events_mode else _GRID_MAX_DEFAULT
    max_records = max_events + 2 if events_mode else 0
    bitgen, label = _bitgen(stream)

    if fam in _JUMP_CONSTANT:
        plan = build_constant_plan(graph, spec, epsilon)
        total_rate = float(plan.rates.sum())
        if total_rate > rate_cap:
            raise RateOverflowError(f"total rate {total_rate} exceeds cap {rate_cap}")
        times, states, terminal, n_events, status = lane.run_constant(
            bitgen, state0, plan.kinds, plan.site_a, plan.site_b, plan.param,
            plan.rates, plan.two_s, plan.epsilon, float(t_end), grid,
            max_records, max_events,
        )
        eps_meta = plan.epsilon if fam.needs_epsilon else None
    elif fam in _JUMP_STATEDEP:
        plan = build_statedep_plan(graph, spec)
        if fam is Family.HARMONIC_DISCRETE:
            total = int(state0.sum())
            dh_cum, dh_tot = harmonic_count_tables(total, spec.two_s)
        else:
            dh_cum = np.zeros(0)
            dh_tot = np.zeros(1)
        times, states, terminal, n_events, status = lane.run_statedep(
            bitgen, state0.astype(np.int64), plan.family_code, plan.kinds,
            plan.site_a, plan.site_b, plan.coef, plan.inc_ptr, plan.inc_idx,
            plan.two_s, dh_cum, dh_tot, float(t_end), grid, max_records,
            max_events, rate_cap,
        )
        eps_meta = None
    else:
        raise UnsupportedModelError(f"simulate does not handle {fam.value}")

    _raise_for_status(status)
    return Trajectory(
        graph=graph,
        kind=fam.state_kind,
        times=np.asarray(times),
        states=np.asarray(states),
        terminal=np.asarray(terminal),
        n_events=int(n_events),
        metadata={
            "family": fam.value,
            "two_s": spec.two_s,
            "epsilon": eps_meta,
            "t_end": float(t_end),
            "stream": label,
            "backend": lane.NAME,
        },
    )


def gillespie_run(graph, spec, init, t_end, stream, **kwargs) -> Trajectory:
    """Exact event-driven run for the finite-activity jump families."""
    spec = validate_model(graph, spec)
    if spec.family.needs_epsilon:
        raise BadEpsilonError(
            f"{spec.family.value} has infinite activity; use thinned_run with epsilon"
        )
    if spec.family in (Family.BEP, Family.IRW_FLOW):
        raise UnsupportedModelError(f"{spec.family.value} is not a jump family")
    return simulate(graph, spec, init, t_end, stream, **kwargs)


def thinned_run(graph, spec, init, t_end, epsilon: float, stream, **kwargs) -> Trajectory:
    """Jump run of an infinite-activity family with jumps below epsilon dropped."""
    spec = validate_model(graph, spec)
    if not spec.family.needs_epsilon:
        raise UnsupportedModelError(
            f"{spec.family.value} has finite activity; use gillespie_run"
        )
    return simulate(graph, spec, init, t_end, stream, epsilon=epsilon, **kwargs)


def em_run(graph, spec, init, t_end, dt, stream, *, record="events",
           backend: str | None = None) -> Trajectory:
    """Euler-Maruyama run of the energy-exchange diffusion.

    ``record`` may be "events" (here: every step), a positive step length,
    or an explicit grid; grid/step times are rounded down to whole steps.
    """
    spec = validate_model(graph, spec)
    if spec.family is not Family.BEP:
        raise UnsupportedModelError(f"em_run needs the BEP family, got {spec.family.value}")
    if dt is None or not (0 < dt < math.inf):
        raise BadDtError(f"dt must be positive and finite, got {dt}")
    if t_end < 0:
        raise OutOfRangeError("t_end must be >= 0")
    n_steps = int(round(t_end / dt)) if t_end > 0 else 0
    if t_end > 0 and n_steps == 0:
        raise BadDtError("dt larger than t_end")

    state0 = as_state_array(graph, spec, init)
    plan = build_diffusion_plan(graph, spec)
    if isinstance(record, str) and record == "events":
        rec_every = 1
    elif isinstance(record, (int, float)) and not isinstance(record, bool):
        rec_every = max(int(round(float(record) / dt)), 1)
    else:
        raise OutOfRangeError("em_run records every step ('events') or every "
                              "`record` time units")
    lane = get_lane(backend)
    bitgen, label = _bitgen(stream)
    times, states, terminal, clamps, status = lane.bep_em_path(
        bitgen, state0, plan.edge_i, plan.edge_j, plan.edge_w, plan.res_c,
        plan.res_alpha, plan.res_gamma, plan.two_s, float(dt), n_steps, rec_every,
    )
    _raise_for_status(status)
    site_steps = n_steps * graph.n
    return Trajectory(
        graph=graph,
        kind=StateKind.MASSES,
        times=np.asarray(times),
        states=np.asarray(states),
        terminal=np.asarray(terminal),
        n_events=n_steps,
        metadata={
            "family": spec.family.value,
            "two_s": spec.two_s,
            "dt": float(dt),
            "t_end": float(t_end),
            "stream": label,
            "backend": lane.NAME,
            "clamped_steps": int(clamps),
            "clamp_fraction": clamps / site_steps if site_steps else 0.0,
        },
    )


def em_moment_sums(graph, spec, init_batch, dt, burn_steps, n_steps, thin, stream,
                   *, backend: str | None = None):
    """Accumulate site moments of order 1..3 over thinned diffusion replicas.

    ``init_batch`` holds one replica state per row; every replica is stepped
    through ``burn_steps`` discarded sweeps and ``n_steps`` further sweeps,
    sampling each replica every ``thin`` steps.  Returns ``(sums, n_samples,
    clamped_steps, terminal_batch)`` where ``sums[k - 1, v]`` is the running
    sum of the k-th power at site v over all kept (replica, step) pairs.
    """
    spec = validate_model(graph, spec)
    if spec.family is not Family.BEP:
        raise UnsupportedModelError(
            f"em_moment_sums needs the BEP family, got {spec.family.value}"
        )
    if dt is None or not (0 < dt < math.inf):
        raise BadDtError(f"dt must be positive and finite, got {dt}")
    if burn_steps < 0 or n_steps < 0 or thin < 1:
        raise OutOfRangeError("need burn_steps, n_steps >= 0 and thin >= 1")
    batch = np.array(init_batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != graph.n:
        raise BadShapeError(f"init_batch must be (replicas, {graph.n})")
    if not np.all(np.isfinite(batch)) or np.any(batch < 0):
        raise BadShapeError("replica states must be finite and nonnegative")

    plan = build_diffusion_plan(graph, spec)
    lane = get_lane(backend)
    bitgen, _ = _bitgen(stream)
    sums, n_samples, clamps, terminal = lane.bep_em_moments(
        bitgen, batch, plan.edge_i, plan.edge_j, plan.edge_w, plan.res_c,
        plan.res_alpha, plan.res_gamma, plan.two_s, float(dt),
        int(burn_steps), int(n_steps), int(thin),
    )
    return np.asarray(sums), int(n_samples), int(clamps), np.asarray(terminal)


# --- deterministic flow -----------------------------------------------------------

def _flow_matrices(graph: Graph, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    lap = graph.laplacian()
    damp = np.zeros(graph.n)
    source = np.zeros(graph.n)
    for v, specs in spec.reservoirs:
        i = graph.index[v]
        c = graph.coupling(v)
        r = specs[0]
        damp[i] = c * r.gamma
        source[i] = c * r.alpha
    return lap + np.diag(damp), source


def default_flow_dt(graph: Graph, spec: ModelSpec) -> float:
    """0.01 over the stiffest local scale (max damping + max weighted degree)."""
    sys_mat, _ = _flow_matrices(graph, spec)
    scale = float(np.max(np.diag(sys_mat)))
    return 0.01 / scale if scale > 0 else 0.01


def ode_flow(graph, spec, init, t_end, dt: float | None = None,
             record=None) -> Trajectory:
    """Fixed-step RK4 integration of the walker-density flow dz/dt = -Az + b."""
    spec = validate_model(graph, spec)
    if spec.family not in (Family.IRW_FLOW, Family.IRW):
        raise UnsupportedModelError("ode_flow needs the IRW_FLOW (or IRW) family")
    if t_end < 0 or not math.isfinite(t_end):
        raise OutOfRangeError("t_end must be finite and >= 0")
    z = np.asarray(init, dtype=np.float64).copy()
    if z.shape != (graph.n,):
        raise OutOfRangeError(f"initial state must have shape ({graph.n},)")
    if np.any(z < 0):
        raise OutOfRangeError("initial state must be >= 0")
    if dt is None:
        dt = default_flow_dt(graph, spec)
    if dt <= 0:
        raise BadDtError("dt must be positive")
    sys_mat, source = _flow_matrices(graph, spec)

    def f(state: np.ndarray) -> np.ndarray:
        return source - sys_mat @ state

    n_steps = max(int(math.ceil(t_end / dt - 1e-12)), 0)
    if record is None:
        stride = max(n_steps // 512, 1)
    elif isinstance(record, (int, float)) and not isinstance(record, bool):
        stride = max(int(round(float(record) / dt)), 1)
    else:
        raise OutOfRangeError("ode_flow records every step or every `record` time units")
    times = [0.0]
    states = [z.copy()]
    t = 0.0
    for step in range(1, n_steps + 1):
        h = min(dt, t_end - t)
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        if step % stride == 0 or step == n_steps:
            times.append(t)
            states.append(z.copy())
    return Trajectory(
        graph=graph,
        kind=StateKind.MASSES,
        times=np.asarray(times),
        states=np.asarray(states),
        terminal=z.copy(),
        n_events=n_steps,
        metadata={"family": Family.IRW_FLOW.value, "dt": float(dt),
                  "t_end": float(t_end), "backend": "numpy"},
    )


def irw_fixed_point(graph: Graph, spec: ModelSpec) -> np.ndarray:
    """Stationary walker density: solve (L + diag(c gamma)) z = c alpha."""
    spec = validate_model(graph, spec)
    if spec.family not in (Family.IRW_FLOW, Family.IRW):
        raise UnsupportedModelError("irw_fixed_point needs the IRW/IRW_FLOW family")
    sys_mat, source = _flow_matrices(graph, spec)
    if not np.any(np.diag(sys_mat) > np.diag(graph.laplacian())):
        raise SingularSystemError("no damping anywhere: fixed point not unique")
    try:
        return np.linalg.solve(sys_mat, source)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularSystemError(str(exc)) from exc


# --- ensembles and stationary sampling -----------------------------------------------

_N_CHUNKS = 256  # fixed so results do not depend on the worker count


def ensemble_at(
    graph: Graph,
    spec: ModelSpec,
    init,
    t: float,
    n_traj: int,
    observable: Callable[[np.ndarray], float],
    stream: RngStream,
    *,
    observable_name: str = "observable",
    epsilon: float | None = None,
    dt: float | None = None,
    workers: int | None = None,
    backend: str | None = None,
    max_events: int | None = None,
) -> EnsembleSummary:
    """Mean and standard error of observable(state at time t) over n_traj runs.

    Work is split into a fixed number of chunks with independent child
    streams, so results are reproducible and independent of ``workers``.
    """
    if n_traj < 1:
        raise OutOfRangeError("n_traj must be >= 1")
    if not isinstance(stream, RngStream):
        raise KindMismatchError("ensemble_at needs an RngStream (for child streams)")
    spec_v = validate_model(graph, spec)
    fam = spec_v.family
    state0 = as_state_array(graph, spec_v, init)
    lane = get_lane(backend)
    budget = max_events if max_events is not None else _GRID_MAX_DEFAULT

    n_chunks = min(_N_CHUNKS, n_traj)
    base, rem = divmod(n_traj, n_chunks)
    sizes = [base + (1 if c < rem else 0) for c in range(n_chunks)]

    if fam in _JUMP_CONSTANT:
        plan = build_constant_plan(graph, spec_v, epsilon)

        def run_chunk(c: int) -> np.ndarray:
            bg = stream.child(c).bit_generator()
            out, _n, status = lane.run_constant_many(
                bg, state0, sizes[c], plan.kinds, plan.site_a, plan.site_b,
                plan.param, plan.rates, plan.two_s, plan.epsilon, float(t), budget,
            )
            _raise_for_status(status)
            return out
    else:
        def run_chunk(c: int) -> np.ndarray:
            sub = stream.child(c)
            out = np.empty((sizes[c], graph.n))
            for k in range(sizes[c]):
                traj = simulate(graph, spec_v, state0, t, sub.child(k),
                                epsilon=epsilon, dt=dt, record=np.array([t]),
                                backend=backend, max_events=max_events)
                out[k] = traj.states[-1]
            return out

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_chunk, range(n_chunks)))
    else:
        chunks = [run_chunk(c) for c in range(n_chunks)]

    values = np.array([observable(row) for chunk in chunks for row in chunk])
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return EnsembleSummary(observable=observable_name, t=float(t), mean=mean,
                           se=se, n=len(values))


def stationary_samples(
    graph: Graph,
    spec: ModelSpec,
    init,
    burn_in: float,
    n_samples: int,
    thin: float,
    stream: RngStream | np.random.Generator,
    *,
    epsilon: float | None = None,
    backend: str | None = None,
    rate_cap: float = DEFAULT_RATE_CAP,
) -> tuple[np.ndarray, dict[str, Any]]:
    """Thinned single-trajectory samples after burn-in, as an (n, V) array."""
    if n_samples < 1:
        raise OutOfRangeError("n_samples must be >= 1")
    if thin <= 0 or burn_in < 0:
        raise OutOfRangeError("need thin > 0 and burn_in >= 0")
    grid = burn_in + thin * np.arange(1, n_samples + 1, dtype=np.float64)
    traj = simulate(graph, spec, init, float(grid[-1]), stream, epsilon=epsilon,
                    record=grid, backend=backend, rate_cap=rate_cap)
    info = dict(traj.metadata)
    info.update({"burn_in": burn_in, "thin": thin, "n_events": traj.n_events})
    return traj.states.copy(), info
