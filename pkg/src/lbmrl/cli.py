"""Command line: ``lbmrl {run,sweep,eluder,verify}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .env import ConstructionError, ParameterError
from .eluder import MAX_EXHAUSTIVE, EluderQuery, eluder_dimension
from .runner import fmt, run_experiment, sweep, verify_cmd

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _seeds(text: str | None):
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds: expected a comma-separated list of integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--eps: expected a comma-separated list of numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbmrl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run one configuration over its seeds"),
                        ("sweep", "run the cross product in the sweep block")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seeds", default=None, help="comma-separated, overrides run.seeds")
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("verify", help="misspecification moments of the configured env")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None, help="CSV path; stdout when omitted")
    sp.add_argument("--probes", type=int, default=50)

    sp = sub.add_parser("eluder", help="eluder dimension of a class table file")
    sp.add_argument("--class-file", required=True,
                    help="one member per row, values over the domain points")
    sp.add_argument("--eps", required=True, help="comma-separated epsilon list")
    sp.add_argument("--mode", choices=("auto", "exhaustive", "greedy"), default="auto")
    sp.add_argument("--out", default=None, help="CSV path; stdout when omitted")
    return p


def _write_rows(rows: list[list], header: list[str], out: str | None) -> None:
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if out:
            fh.close()


def _eluder(args) -> None:
    import numpy as np

    path = Path(args.class_file)
    if not path.exists():
        raise ConfigError(f"{path}: no such class file")
    values = np.loadtxt(path.read_text().replace(",", " ").splitlines(), ndmin=2)
    mode = args.mode
    if mode == "auto":
        mode = "exhaustive" if values.shape[1] <= MAX_EXHAUSTIVE else "greedy"
    rows = []
    for eps in _floats(args.eps):
        res = eluder_dimension(EluderQuery(values, eps, mode=mode))
        dim = res if mode == "exhaustive" else res[0]
        rows.append([fmt(eps), fmt(dim), mode])
    _write_rows(rows, ["epsilon", "dimension", "mode"], args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "eluder":
            _eluder(args)
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "run":
            run_experiment(cfg, out=args.out, seeds=_seeds(args.seeds), jobs=args.jobs)
        elif args.command == "sweep":
            sweep(cfg, out=args.out, seeds=_seeds(args.seeds), jobs=args.jobs)
        else:
            report = verify_cmd(cfg, n_random=args.probes)
            rows = [[fmt(r["beta"]), fmt(r["xi_probe"]), fmt(r["eta_probe"]), fmt(r["xi_sup"]),
                     fmt(r["eta_sup"])] for r in report.rows()]
            _write_rows(rows, ["beta", "xi_probe_max", "eta_probe_max", "xi_sup_exact",
                               "eta_sup_exact"], args.out)
            print(f"# pointwise max xi={report.xi_pointwise_max:.6g} "
                  f"eta={report.eta_pointwise_max:.6g}; probe maxima are lower bounds "
                  f"over {report.n_probes} policies", file=sys.stderr)
    except (ConfigError, ParameterError, ConstructionError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
