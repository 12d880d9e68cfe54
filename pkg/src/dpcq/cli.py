"""Command-line front end: ``dpcq run | sweep | report | oracle-check``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .checks import oracle_equivalence, run_sweep_checks
from .config import ConfigError, load_sim_config, load_sweep_spec, merge, parse_override, sim_config_from_dict
from .harness import Episode
from .metrics import read_trace_csv, summarize, write_trace_csv
from .sweep import figure_preset, run_sweep, write_outputs

OUTPUT_ENV = "DPCQ_OUTPUT_DIR"
log = logging.getLogger("dpcq")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "dpcq-out"))


def _print_checks(results) -> bool:
    ok = True
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        ok &= r.passed
    return ok


def cmd_run(args) -> int:
    overrides: dict = {}
    for o in args.set or []:
        overrides = merge(overrides, parse_override(o))
    cfg = load_sim_config(args.config, overrides) if args.config else sim_config_from_dict(overrides)
    out = Path(args.out or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)

    if args.resume:
        episode = Episode.from_checkpoint(json.loads(Path(args.resume).read_text()))
    else:
        episode = Episode(cfg)
    episode.run(until=args.stop_at)
    if args.stop_at is not None and episode.iteration < episode.cfg.q_iterations:
        path = out / "checkpoint.json"
        path.write_text(json.dumps(episode.checkpoint()))
        print(f"checkpoint at iteration {episode.iteration} -> {path}")
        return 0

    trace = episode.trace()
    write_trace_csv(trace, out / "trace.csv")
    (out / "topology.json").write_text(episode.topology.to_json() + "\n")
    summary = summarize(trace)
    manifest = {
        "package_version": __version__,
        "config": episode.cfg.to_dict(),
        "config_digest": episode.cfg.digest(),
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for k in ("label", "aggregate_capacity", "jain", "convergence_iteration", "terminal_deviation",
              "shared_entries"):
        print(f"{k}: {summary[k]}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out or default_output_dir())
    if args.config:
        spec = load_sweep_spec(args.config)
        if args.seeds is not None:
            spec.seeds = args.seeds
    elif args.figure is not None:
        kw = {"seeds": args.seeds if args.seeds is not None else 10}
        if args.n_femto:
            kw["n_femto"] = args.n_femto
        if args.iterations:
            kw["base"] = {"q_iterations": args.iterations}
        spec = figure_preset(args.figure, **kw)
    else:
        print("sweep needs --config or --figure", file=sys.stderr)
        return 2
    spec.output_dir = str(out)
    if args.workers:
        spec.workers = args.workers
    result = run_sweep(spec, write=False)
    write_outputs(result, out)
    for ds in result.datasets:
        print(f"figure {ds.figure_id}: {len(ds.rows)} rows")
    if result.manifest["failures"]:
        print(f"{len(result.manifest['failures'])} episode(s) failed; see manifest.json", file=sys.stderr)
    print(f"wrote {out}")
    if args.check:
        checks = run_sweep_checks(result)
        if not checks:
            print("no acceptance checks apply to this sweep")
        return 0 if _print_checks(checks) and not result.manifest["failures"] else 1
    return 0


def cmd_report(args) -> int:
    cfg = None
    if args.config:
        cfg = load_sim_config(args.config)
    rows = []
    for path in args.traces:
        trace = read_trace_csv(Path(path), cfg)
        s = summarize(trace, band=args.band, hold=args.hold)
        s["path"] = str(path)
        rows.append(s)
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        for s in rows:
            print(f"{s['path']}: capacity={s['aggregate_capacity']:.4f} jain={s['jain']:.4f} "
                  f"converged={s['converged']} at={s['convergence_iteration']} "
                  f"terminal_dev={s['terminal_deviation']:.4f} shared={s['shared_entries']}")
    return 0


def cmd_oracle_check(args) -> int:
    result = oracle_equivalence(seeds=range(args.seeds), steps=args.steps, epsilon=args.epsilon,
                                alpha_exponent=args.alpha_exponent)
    ok = _print_checks([result])
    return 0 if ok or not args.check else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpcq", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one episode")
    r.add_argument("--config", help="YAML/JSON file with SimConfig fields")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a field, e.g. --set reward.kind=RF3 (repeatable)")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./dpcq-out)")
    r.add_argument("--stop-at", type=int, help="pause at this iteration and write a checkpoint")
    r.add_argument("--resume", help="continue from a checkpoint file")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a figure-reproduction sweep")
    s.add_argument("--config", help="YAML/JSON file with SweepSpec fields")
    s.add_argument("--figure", type=int, choices=[2, 3, 5, 7, 9, 11])
    s.add_argument("--seeds", type=int)
    s.add_argument("--n-femto", type=int, nargs="+")
    s.add_argument("--iterations", type=int, help="override q_iterations")
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.add_argument("--check", action="store_true", help="exit nonzero if an applicable acceptance check fails")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="recompute metrics from stored trace CSVs")
    rp.add_argument("traces", nargs="+")
    rp.add_argument("--config", help="config the traces were produced with (for the target capacity)")
    rp.add_argument("--band", type=float, default=0.5)
    rp.add_argument("--hold", type=int, default=100)
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(func=cmd_report)

    o = sub.add_parser("oracle-check", help="Q-learning vs value-iteration oracle suite")
    o.add_argument("--seeds", type=int, default=10)
    o.add_argument("--steps", type=int, default=100_000)
    o.add_argument("--epsilon", type=float, default=0.2)
    o.add_argument("--alpha-exponent", type=float, default=0.7)
    o.add_argument("--check", action="store_true")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

