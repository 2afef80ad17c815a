"""Command-line front end: identity suites, simulations and steady-state
experiments driven by JSON configs with reproducible seeds.

Exit codes: 0 all checks passed, 2 configuration problem, 3 runtime or
simulation failure, 4 statistical check failed.  Reports are written with
sorted keys and no timestamps, so rerunning a config reproduces them byte
for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import engine, ness
from .duality import mc_mixture_duality, run_identity_suite, suite_summary
from .errors import ConfigError, MixflowError, ModelJsonError
from .models import DualIndex, Family, model_from_json
from .rng import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_STATISTICAL = 4

_SUITE_TOLERANCES = {
    "edge": "edge_tol",
    "moment": "moment_tol",
    "reservoir": "reservoir_tol",
    "poisson": "poisson_tol",
    "redistribution": "redistribution_tol",
}


def _load_config(path: str) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def _apply_overrides(cfg: dict[str, Any], args: argparse.Namespace) -> dict[str, Any]:
    """Flags override the matching config fields and nothing else."""
    out = dict(cfg)
    if args.seed is not None:
        out["seed"] = args.seed
    if args.workers is not None:
        out["workers"] = args.workers
    if args.out is not None:
        out["out"] = args.out
    return out


def _stream_from(cfg: Mapping[str, Any]) -> RngStream:
    return RngStream(int(cfg.get("seed", 0)), int(cfg.get("stream_id", 0)))


def _out_dir(cfg: Mapping[str, Any]) -> Path:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def cmd_verify(cfg: Mapping[str, Any]) -> int:
    """Deterministic identity suite; exit 0 only when every check passes."""
    kwargs: dict[str, float] = {}
    tols = cfg.get("tolerances", {})
    if not isinstance(tols, Mapping):
        raise ConfigError("'tolerances' must be an object")
    for key, value in tols.items():
        if key not in _SUITE_TOLERANCES:
            raise ConfigError(
                f"unknown tolerance {key!r}; options: {sorted(_SUITE_TOLERANCES)}"
            )
        kwargs[_SUITE_TOLERANCES[key]] = float(value)
    two_s_grid = cfg.get("two_s_grid")
    if two_s_grid is not None:
        kwargs["two_s_grid"] = [float(s) for s in two_s_grid]

    reports = run_identity_suite(**kwargs)
    summary = suite_summary(reports)
    failures = [r.to_json() for r in reports if not r.passed]
    out = _out_dir(cfg)
    path = out / str(cfg.get("report", "verify_report.json"))
    _write_json(path, {"summary": summary, "failures": failures[:200]})
    status = "PASS" if summary["all_passed"] else "FAIL"
    print(f"verify: {summary['total_checks']} checks across "
          f"{len(summary['identities'])} identity families, "
          f"{summary['total_failures']} failures -> {status} ({path})")
    return EXIT_OK if summary["all_passed"] else EXIT_STATISTICAL


def cmd_simulate(cfg: Mapping[str, Any]) -> int:
    """One trajectory to CSV plus a JSON run summary."""
    if "model" not in cfg:
        raise ConfigError("simulate config needs a 'model' block")
    graph, spec = model_from_json(cfg["model"])
    if "t_end" not in cfg:
        raise ConfigError("simulate config needs 't_end'")
    t_end = float(cfg["t_end"])
    init = cfg.get("init")
    if init is None:
        raise ConfigError("simulate config needs 'init' site values")
    if isinstance(init, Mapping):
        init = {k: float(v) for k, v in init.items()}
        init = np.array([init[str(v)] if str(v) in init else init[v]
                         for v in graph.vertices])
    else:
        init = np.asarray([float(v) for v in init])

    record: Any = cfg.get("record", "events")
    if isinstance(record, list):
        record = np.asarray(record, dtype=float)
    traj = engine.simulate(
        graph, spec, init, t_end, _stream_from(cfg),
        epsilon=float(cfg["epsilon"]) if "epsilon" in cfg else None,
        dt=float(cfg["dt"]) if "dt" in cfg else None,
        record=record,
        max_events=int(cfg.get("max_events", 2_000_000)),
    )
    out = _out_dir(cfg)
    csv_path = out / str(cfg.get("trajectory", "trajectory.csv"))
    traj.to_csv(csv_path)
    report = {
        "family": spec.family.value,
        "n_sites": graph.n,
        "t_end": t_end,
        "n_events": traj.n_events,
        "rows": int(traj.times.size),
        "terminal": [float(x) for x in traj.terminal],
        "metadata": {k: v for k, v in traj.metadata.items()},
    }
    _write_json(out / str(cfg.get("report", "simulate_report.json")), report)
    print(f"simulate: {spec.family.value} on {graph.n} sites, "
          f"{traj.n_events} events, {traj.times.size} rows -> {csv_path}")
    return EXIT_OK


def _report_exit(result: Mapping[str, Any], path: Path, label: str) -> int:
    _write_json(path, result)
    n_fail = sum(0 if r["passed"] else 1 for r in result["reports"])
    status = "PASS" if result["all_passed"] else "FAIL"
    print(f"{label}: {result['n_reports']} checks, {n_fail} failures "
          f"-> {status} ({path})")
    return EXIT_OK if result["all_passed"] else EXIT_STATISTICAL


def cmd_ness(cfg: Mapping[str, Any]) -> int:
    """Steady-state experiment named by the config's 'experiment' field."""
    if "experiment" not in cfg:
        raise ConfigError("ness config needs an 'experiment' field")
    result = ness.run_experiment(cfg, _stream_from(cfg))
    out = _out_dir(cfg)
    return _report_exit(result, out / str(cfg.get("report", "ness_report.json")),
                        f"ness[{cfg['experiment']}]")


def cmd_sweep(cfg: Mapping[str, Any]) -> int:
    """Truncation/step-size convergence sweep (epsilon-sweep unless told otherwise)."""
    sweep_cfg = dict(cfg)
    sweep_cfg.setdefault("experiment", "epsilon-sweep")
    if sweep_cfg["experiment"] not in ("epsilon-sweep", "dt-check"):
        raise ConfigError("sweep runs 'epsilon-sweep' or 'dt-check' experiments")
    result = ness.run_experiment(sweep_cfg, _stream_from(sweep_cfg))
    out = _out_dir(sweep_cfg)
    return _report_exit(result,
                        out / str(sweep_cfg.get("report", "sweep_report.json")),
                        f"sweep[{sweep_cfg['experiment']}]")


def cmd_sample_mixing(cfg: Mapping[str, Any]) -> int:
    """Monte Carlo mixture-propagation check between a model and its hidden twin."""
    for key in ("model", "hidden_family", "xi", "theta_init", "t", "n_traj"):
        if key not in cfg:
            raise ConfigError(f"sample-mixing config needs {key!r}")
    graph, spec = model_from_json(cfg["model"])
    xi_raw = cfg["xi"]
    if isinstance(xi_raw, Mapping):
        mapping = {}
        for v, k in xi_raw.items():
            label = int(v) if isinstance(v, str) and v.lstrip("-").isdigit() else v
            mapping[label] = int(k)
        xi = DualIndex(tuple(mapping.items()))
    else:
        xi = DualIndex(tuple((v, int(k)) for v, k in zip(graph.vertices, xi_raw)))
    report = mc_mixture_duality(
        graph,
        (spec.family, Family(cfg["hidden_family"])),
        xi,
        np.asarray([float(x) for x in cfg["theta_init"]]),
        float(cfg["t"]),
        int(cfg["n_traj"]),
        _stream_from(cfg),
        two_s=spec.two_s,
        epsilon=float(cfg["epsilon"]) if "epsilon" in cfg else None,
        workers=cfg.get("workers"),
    )
    out = _out_dir(cfg)
    path = out / str(cfg.get("report", "mixing_report.json"))
    _write_json(path, report.to_json())
    status = "PASS" if report.passed else "FAIL"
    print(f"sample-mixing: |diff|={report.abs_error:.3e} vs 3se="
          f"{report.tol:.3e} -> {status} ({path})")
    return EXIT_OK if report.passed else EXIT_STATISTICAL


_HANDLERS: dict[str, Callable[[Mapping[str, Any]], int]] = {
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "ness": cmd_ness,
    "sweep": cmd_sweep,
    "sample-mixing": cmd_sample_mixing,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixflow",
        description="Simulation and verification toolkit for stochastic "
                    "mass-transport models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in _HANDLERS.items():
        p = sub.add_parser(name, help=handler.__doc__)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--workers", type=int, default=None,
                       help="trajectory-level worker pool size")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.set_defaults(handler=handler)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(_load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.handler(cfg)
    except (ConfigError, ModelJsonError) as exc:
        # A model block that fails to parse or validate is a config problem,
        # not a runtime failure.
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MixflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
