"""Command-line entry point for the simulation pipelines."""

from __future__ import annotations

import argparse
import sys

from .pipeline import RunConfig, config_from_ini, run_characterize, run_convergence, run_hhg, run_linear_response


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="INI-style config file (key = value, sectioned)")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE", help="override any config field")
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--cache-dir", default=None,
                     help="cache directory (default: $MOTTLIGHT_CACHE_DIR)")
    sub.add_argument("--no-cache", action="store_true", help="bypass the cache")
    sub.add_argument("--workers", type=int, default=None, help="parallel mode workers")


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = config_from_ini(args.config, overrides=args.overrides)
    elif args.overrides:
        import tempfile

        with tempfile.NamedTemporaryFile("w", suffix=".ini", delete=False) as fh:
            fh.write("[run]\n")
            path = fh.name
        cfg = config_from_ini(path, overrides=args.overrides)
    else:
        cfg = RunConfig()
    changes = {}
    if args.no_cache:
        changes["use_cache"] = False
    if args.workers is not None:
        changes["workers"] = args.workers
    if changes:
        import dataclasses

        cfg = dataclasses.replace(cfg, **changes)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mottlight",
        description="Emission spectrum and squeezing of a driven extended-Hubbard chain")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("characterize", help="field-free spectrum, histogram, pair counts")
    _add_common(p)

    p = subs.add_parser("linear-response", help="weak-probe response and V=0 control")
    _add_common(p)
    p.add_argument("--no-control", action="store_true", help="skip the V=0 control run")

    p = subs.add_parser("hhg", help="per-mode emission spectrum and squeezing scan")
    _add_common(p)
    p.add_argument("--method", choices=["full", "msa", "both"], default="both")

    p = subs.add_parser("converge", help="one-at-a-time numerical-knob sweeps")
    _add_common(p)
    p.add_argument("--knobs", default="dt,m_el,n_max,krylov_dim",
                   help="comma-separated subset of dt,m_el,n_max,krylov_dim")

    args = parser.parse_args(argv)
    cfg = _load_config(args)
    cache_dir = args.cache_dir

    if args.command == "characterize":
        summary = run_characterize(cfg, out_dir=args.out, cache_dir=cache_dir)
        print(f"states: {summary['n_states']}  gap: {summary['gap']:.6e} a.u. "
              f"({summary['gap_per_drive']:.2f} drive units)")
        return 0

    if args.command == "linear-response":
        results = run_linear_response(cfg, out_dir=args.out, cache_dir=cache_dir,
                                      control=not args.no_control)
        for name, r in results.items():
            print(f"{name}: peak at {r['peak_omega']:.6e} a.u.")
        return 0

    if args.command == "hhg":
        def progress(done, total):
            print(f"  propagation {done}/{total}", file=sys.stderr)

        result = run_hhg(cfg, method=args.method, out_dir=args.out,
                         cache_dir=cache_dir, progress=progress)
        n_fail = len(result.failures())
        print(f"{len(result.rows)} modes, {n_fail} failures -> {args.out}/hhg.csv")
        return 1 if n_fail else 0

    if args.command == "converge":
        knobs = tuple(k.strip() for k in args.knobs.split(",") if k.strip())
        report = run_convergence(cfg, knobs=knobs, out_dir=args.out, cache_dir=cache_dir)
        for knob, entry in report["knobs"].items():
            flag = "PASS" if entry["pass"] else "FAIL"
            print(f"{knob}: max relative change {entry['max_rel_change']:.3e} [{flag}]")
        print("overall:", "PASS" if report["pass"] else "FAIL")
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
