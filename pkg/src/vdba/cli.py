"""Command-line entry point: ``vdba run|validate|replay``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from vdba.dbru import UnknownAllocId, read_dbru_trace
from vdba.runner import EXIT_INVARIANT, EXIT_OK, EXIT_VALIDATION, RuntimeInvariantViolation, run
from vdba.scenario import TIMING_MODES, ParseError, ValidationError, load_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vdba", description="Multi-tenant XGS-PON upstream scheduling simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def run_opts(sp):
        sp.add_argument("scenario")
        sp.add_argument("--frames", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--timing", choices=TIMING_MODES)
        sp.add_argument("--out", help="output directory (overrides $VDBA_OUT_DIR and the scenario)")
        sp.add_argument("--concurrent", action="store_true", help="run vDBA instances and ONUs in a thread pool")

    run_opts(sub.add_parser("run", help="run a scenario"))
    sub.add_parser("validate", help="check a scenario file").add_argument("scenario")
    rp = sub.add_parser("replay", help="drive the schedulers from a recorded DBRU trace")
    rp.add_argument("dbru_trace")
    run_opts(rp)
    return p


def _load(path: str):
    try:
        return load_scenario(path)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
    except ValidationError as e:
        for err in e.errors:
            print(f"invalid: {err}", file=sys.stderr)
    return None


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    sc = _load(args.scenario)
    if sc is None:
        return EXIT_VALIDATION
    if args.cmd == "validate":
        print(f"ok: {len(sc.slices)} slices, {len(sc.onus)} ONUs, {sc.frames} frames")
        return EXIT_OK

    overrides = {}
    if args.frames is not None:
        overrides["frames"] = args.frames
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.timing is not None:
        overrides["timing_mode"] = args.timing
    if args.concurrent:
        overrides["concurrent"] = True
    sc = dataclasses.replace(sc, **overrides)

    try:
        if args.cmd == "replay":
            with open(args.dbru_trace, newline="") as fh:
                report = run(sc, args.out, dbru_replay=list(read_dbru_trace(fh)))
        else:
            report = run(sc, args.out)
    except (UnknownAllocId, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeInvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT

    iv = report.interval
    print(f"frames={report.frames} timing={report.timing_mode} out={report.out_dir}")
    if iv is not None:
        print(
            f"inter-map interval: mean={iv.mean_us:.3f}us var={iv.variance_us2:.4f}us^2 "
            f"min={iv.min_us:.3f} max={iv.max_us:.3f} p99={iv.p99_us:.3f}"
        )
    print(f"merge: mean={report.mean_merge_us:.2f}us late_maps={report.maps_late}")
    for sid, s in sorted(report.slice_stats.items()):
        mean = s.granted_total / s.frames if s.frames else 0
        print(f"slice {sid}: granted/frame={mean:.1f} words tx={s.transmitted_bytes} B latency={s.mean_latency():.2f} frames")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
