"""Command-line experiment runner.

    adaptmcmc run CONFIG [--seed S] [--steps N] [--out DIR] [--workers W]
    adaptmcmc validate CONFIG
    adaptmcmc oracle two-state --theta1 A --theta2 B [--steps N]

Exit codes: 0 success, 1 a required diagnostic failed, 2 configuration
error, 3 I/O error.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import ConfigErrors, ExperimentConfig, parse_config
from .controller import RunTrace
from .diagnostics import replicate_seeds
from .controller import run as run_chain

log = logging.getLogger("adaptmcmc")

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def trace_header(d: int) -> list[str]:
    return (["k"] + [f"x{i + 1}" for i in range(d)]
            + ["accepted", "log_accept", "kappa", "nu", "reinit", "step"])


def trace_to_csv(trace: RunTrace) -> str:
    """Stable CSV layout; floats use 17 significant digits."""
    d = trace.x.shape[1]
    lines = [",".join(trace_header(d))]
    for i in range(trace.n):
        xs = ",".join(f"{v:.17g}" for v in trace.x[i])
        lines.append(f"{i + 1},{xs},{int(trace.accepted[i])},{trace.log_accept[i]:.17g},"
                     f"{trace.kappa[i]},{trace.nu[i]},{int(trace.nu[i] == 0)},{trace.step[i]:.17g}")
    return "\n".join(lines) + "\n"


def theta_document(trace: RunTrace) -> dict:
    return {"layout": "row-major flattened parameter", "steps": trace.theta_steps.tolist(),
            "theta": [[None if np.isnan(v) else float(v) for v in row] for row in trace.theta],
            "final_theta": trace.final_theta.tolist()}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> int:
    """Runs replicates and configured diagnostics; writes artifacts + manifest.

    ``workers`` (default: ``run.workers`` from the config, else the CPU count)
    only affects scheduling, never results.
    """
    r = cfg.run
    workers = workers or r.get("workers") or os.cpu_count() or 1
    out = Path(cfg.data["output"])
    key = f"{cfg.hash()}_s{r['seed']}"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_IO

    alg = cfg.build_algorithm()
    t = alg.target
    schedule = cfg.schedule
    failures = []
    artifacts = []
    summaries = []
    ergodic = []
    seeds = replicate_seeds(r["seed"], r["replicates"])

    def one(i):
        # a single replicate keeps the plain seed so it matches ``run --seed``
        rng = np.random.default_rng(seeds[i]) if r["replicates"] > 1 else np.random.default_rng(r["seed"])
        trace = run_chain(alg, schedule, r["steps"], seed=rng, cadence=r["cadence"])
        reports = [dg.ergodic_average(trace, f, r["burn_in"], t,
                                      batches=cfg.diagnostics["batches"]).to_dict()
                   for f in cfg.diagnostics["functions"]]
        return ({"replicate": i, **trace.summary()}, {"replicate": i, "reports": reports},
                trace if i < r["write_traces"] else None)

    try:
        with ThreadPoolExecutor(max(1, min(workers, r["replicates"]))) as pool:
            results = pool.map(one, range(r["replicates"]))
            # all writes happen here, in replicate order, on this thread
            for i, (summary, erg, trace) in enumerate(results):
                summaries.append(summary)
                ergodic.append(erg)
                if cfg.diagnostics["required"]:
                    failures += [f"replicate {i} LLN {rep['function']}"
                                 for rep in erg["reports"] if rep["passed"] is False]
                if trace is not None:
                    p = out / f"{key}_r{i}_trace.csv"
                    p.write_text(trace_to_csv(trace))
                    q = out / f"{key}_r{i}_theta.json"
                    _dump(q, theta_document(trace))
                    artifacts += [{"kind": "trace", "path": p.name, "replicate": i},
                                  {"kind": "theta", "path": q.name, "replicate": i}]
        p = out / f"{key}_ergodic.json"
        _dump(p, ergodic)
        artifacts.append({"kind": "ergodic_report", "path": p.name})
        p = out / f"{key}_summary.json"
        _dump(p, summaries)
        artifacts.append({"kind": "summary", "path": p.name})

        clt = cfg.clt
        if clt is not None:
            rep = dg.clt_test(alg, schedule, clt["function"], clt["replicates"], clt["n"],
                              clt["sigma"], clt["burn_in"], r["seed"], workers=workers)
            p = out / f"{key}_clt.json"
            _dump(p, rep.to_dict())
            artifacts.append({"kind": "clt_report", "path": p.name})
            if cfg.diagnostics["required"] and not rep.p_value > 0.01:
                failures.append(f"CLT KS p-value {rep.p_value:.3g}")

        p = out / f"{key}_manifest.json"
        _dump(p, {"config_hash": cfg.hash(), "seed": r["seed"], "config": cfg.data,
                  "artifacts": artifacts, "failures": failures})
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    for f in failures:
        log.warning("required diagnostic failed: %s", f)
    return EXIT_DIAGNOSTIC if failures else EXIT_OK


def _load(path: str) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adaptmcmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--steps", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--workers", type=int, default=None,
                       help="replicate worker threads (default: available CPUs)")
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config")
    p_or = sub.add_parser("oracle", help="analytic oracles")
    p_or.add_argument("name", choices=["two-state"])
    p_or.add_argument("--theta1", type=float, required=True)
    p_or.add_argument("--theta2", type=float, required=True)
    p_or.add_argument("--steps", type=int, default=0, help="also simulate this many steps")
    p_or.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    if args.command == "oracle":
        try:
            rep = dg.two_state_oracle(args.theta1, args.theta2, simulate_steps=args.steps,
                                      rng=np.random.default_rng(args.seed))
        except ValueError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        print(json.dumps(rep.to_dict(), indent=2))
        return EXIT_OK

    try:
        cfg = _load(args.config)
        if args.command == "run":
            cfg = cfg.with_overrides(args.seed, args.steps, args.out)
    except OSError as exc:
        log.error("cannot read %s: %s", args.config, exc)
        return EXIT_IO
    except ConfigErrors as exc:
        for path, msg in exc.errors:
            log.error("%s: %s", path or "<root>", msg)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok {cfg.hash()}")
        return EXIT_OK
    return run_experiment(cfg, args.workers)


if __name__ == "__main__":
    sys.exit(main())
