"""Throughput comparison between the compiled and pure-Python engine lanes.

Two workloads are timed for every available backend:

* ``jump``: event-driven simulation of a boundary-driven continuous chain,
  reported in events per second.  Both lanes consume the identical random
  stream, so their terminal states must agree bit for bit; the benchmark
  asserts that before trusting the numbers.
* ``em``: replicated Euler-Maruyama stepping of the diffusion limit with
  moment accumulation, reported in replica-site-steps per second.  The lanes
  draw their noise in different orders, so only shapes are compared here.

Run from the repository root::

    python3 benchmarks/bench_engine.py
    python3 benchmarks/bench_engine.py --sites 32 --t-end 50 --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mixflow import engine
from mixflow.models import (
    Family,
    ModelSpec,
    ReservoirSpec,
    chain_graph,
    validate_model,
)
from mixflow.rng import RngStream


def _jump_model(n_sites: int):
    graph = chain_graph(n_sites)
    spec = validate_model(graph, ModelSpec(
        family=Family.KMP_CONTINUOUS,
        two_s=1.0,
        reservoirs={1: ReservoirSpec(theta_star=0.5),
                    n_sites: ReservoirSpec(theta_star=1.5)},
    ))
    return graph, spec


def _em_model(n_sites: int):
    graph = chain_graph(n_sites)
    spec = validate_model(graph, ModelSpec(
        family=Family.BEP,
        two_s=1.0,
        reservoirs={1: ReservoirSpec(alpha=0.5, gamma=1.5),
                    n_sites: ReservoirSpec(alpha=0.4, gamma=0.8)},
    ))
    return graph, spec


def bench_jump(backend: str, n_sites: int, t_end: float, seed: int,
               repeat: int) -> tuple[float, int, np.ndarray]:
    graph, spec = _jump_model(n_sites)
    init = np.ones(graph.n)
    best = np.inf
    n_events = 0
    terminal = np.empty(0)
    grid = np.array([0.0, t_end])  # skip per-event state storage
    for _ in range(repeat):
        start = time.perf_counter()
        traj = engine.simulate(graph, spec, init, t_end, RngStream(seed),
                               record=grid, backend=backend)
        best = min(best, time.perf_counter() - start)
        n_events = traj.n_events
        terminal = traj.terminal
    return best, n_events, terminal


def bench_em(backend: str, n_sites: int, replicas: int, steps: int,
             seed: int, repeat: int) -> tuple[float, int]:
    graph, spec = _em_model(n_sites)
    init = np.full((replicas, graph.n), 0.5)
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        engine.em_moment_sums(graph, spec, init.copy(), 1e-3, 0, steps, 10,
                              RngStream(seed), backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, replicas * n_sites * steps


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sites", type=int, default=16,
                        help="chain length for both workloads")
    parser.add_argument("--t-end", type=float, default=5000.0,
                        help="jump-process horizon")
    parser.add_argument("--replicas", type=int, default=256,
                        help="diffusion replicas stepped in parallel")
    parser.add_argument("--steps", type=int, default=20_000,
                        help="diffusion steps per replica")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions; the best run is reported")
    args = parser.parse_args(argv)

    backends = engine.available_backends()
    print(f"backends: {', '.join(backends)} (default {engine.BACKEND})")

    print(f"\njump process: {args.sites}-site driven chain, "
          f"t_end={args.t_end:g}")
    terminals = {}
    for backend in backends:
        secs, n_events, terminal = bench_jump(
            backend, args.sites, args.t_end, args.seed, args.repeat)
        terminals[backend] = terminal
        print(f"  {backend:>9}: {n_events / secs:12.3e} events/s "
              f"({n_events} events in {secs:.3f}s)")
    if len(terminals) == 2:
        a, b = terminals.values()
        same = np.array_equal(a, b)
        print(f"  lane parity: terminal states identical = {same}")
        if not same:
            raise SystemExit("jump lanes diverged; benchmark numbers invalid")

    print(f"\ndiffusion stepping: {args.replicas} replicas x {args.steps} "
          f"steps, {args.sites} sites")
    for backend in backends:
        secs, work = bench_em(backend, args.sites, args.replicas, args.steps,
                              args.seed, args.repeat)
        print(f"  {backend:>9}: {work / secs:12.3e} replica-site-steps/s "
              f"({secs:.3f}s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
