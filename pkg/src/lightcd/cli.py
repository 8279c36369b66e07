"""Command-line front end.

Subcommands
-----------
detect     stream a CSV through the detector; JSON-lines scores + events
generate   write a synthetic series as CSV plus a change-point sidecar
bench      run a benchmark grid and write one CSV row per cell
calibrate  recommend ``ph.lambda`` from a change-free CSV prefix
replay     re-run a command from the manifest it wrote

Every command writes ``<out>.manifest.json`` (or ``manifest.json`` inside an
output directory) holding the argument vector, the resolved configuration
and wall-clock timings.  Exit codes: 0 ok, 1 run error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, DetectorConfig, load_config
from .core import LightError, SeriesMeta, iter_csv
from .detector import LightDetector, calibrate
from .evalharness import BenchSpec, run_benchmark, write_long, write_results
from .synthgen import FAMILIES, GenSpec, generate

log = logging.getLogger("lightcd")

EXIT_OK, EXIT_RUN_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("-m", "--window", type=int, dest="window", help="window size m")
    p.add_argument("--seed", type=int, help="seed for every randomized step")
    p.add_argument("--variant", choices=("light", "ind", "nf", "np"))
    p.add_argument("--lambda", type=float, dest="ph_lambda", help="Page-Hinkley threshold")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra config override, repeatable (e.g. --set pca.c=100)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lightcd", description="Change detection for high-dimensional time series.")
    parser.add_argument("--version", action="version", version=f"lightcd {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="run the detector over a CSV file")
    p.add_argument("input", help="CSV file, one sample per row ('-' for stdin)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bounds", help="CSV with two rows: per-dimension lower and upper bounds")
    _add_config_flags(p)

    p = sub.add_parser("generate", help="write a synthetic series")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--segments", type=int, default=100)
    p.add_argument("--segment-len", type=int, default=2000)
    p.add_argument("--sigma-noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; change points go to <out>.truth")

    p = sub.add_parser("bench", help="run a benchmark grid")
    p.add_argument("--n-list", type=_int_list, default=[200])
    p.add_argument("--m-list", type=_int_list, default=[200])
    p.add_argument("--families", type=_str_list, default=["gaussian"])
    p.add_argument("--variants", type=_str_list, default=["light"])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--segments", type=int, default=20)
    p.add_argument("--segment-len", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="results CSV; <out>.long.csv holds the long format")
    _add_config_flags(p)

    p = sub.add_parser("calibrate", help="recommend ph.lambda from a change-free CSV")
    p.add_argument("input")
    p.add_argument("--safety", type=float, default=1.5)
    p.add_argument("--rows", type=int, help="use only the first ROWS samples")
    p.add_argument("--out", help="also write the result and a manifest to this JSON path")
    _add_config_flags(p)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="override the output path recorded in the manifest")
    return parser


# -- helpers -------------------------------------------------------------------


def resolve_config(args) -> DetectorConfig:
    overrides: dict = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.window is not None:
        overrides["m"] = args.window
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.ph_lambda is not None:
        overrides["ph.lambda"] = args.ph_lambda
    if args.seed is not None:
        for key in ("pca.seed", "factor.seed", "div.seed"):
            overrides[key] = args.seed
    return load_config(args.config, overrides)


def _open_input(path: str):
    return sys.stdin if path == "-" else open(path, newline="")


def _load_bounds(path: str) -> SeriesMeta:
    rows = list(iter_csv(open(path, newline="")))
    if len(rows) != 2:
        raise ConfigError(f"{path}: bounds file needs exactly two rows (lower, upper)")
    return SeriesMeta(n=rows[0].size, lower_bounds=rows[0], upper_bounds=rows[1])


def _manifest(command: str, argv: Sequence[str], config: Optional[DetectorConfig], **extra) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config": config.to_flat() if config is not None else None,
        **extra,
    }


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands --------------------------------------------------------------------


def cmd_detect(args, argv) -> int:
    cfg = resolve_config(args)
    meta = _load_bounds(args.bounds) if args.bounds else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    detector = None
    steps = 0
    with _open_input(args.input) as fh, open(out / "scores.jsonl", "w") as scores:
        for row in iter_csv(fh, n=meta.n if meta else None):
            if detector is None:
                detector = LightDetector(row.size, cfg, meta)
            detector.step(row)
            steps += 1
            rec = detector.last_record
            if rec is not None:
                scores.write(json.dumps(rec.to_dict()) + "\n")
    events = [e.to_dict() for e in detector.events] if detector else []
    _write_json(out / "events.json", {"events": events, "samples": steps})
    _write_json(out / "manifest.json", _manifest(
        "detect", argv, cfg, input=os.path.abspath(args.input) if args.input != "-" else "-",
        output=str(out.resolve()), seeds={k: v for k, v in cfg.to_flat().items() if k.endswith("seed")},
        samples=steps, events=len(events), wall_seconds=time.perf_counter() - started,
    ))
    for e in events:
        print(f"change at t={e['t']} (score {e['score']:.6g}, statistic {e['ph_statistic']:.6g})")
    print(f"{len(events)} change(s) in {steps} samples; records in {out / 'scores.jsonl'}")
    return EXIT_OK


def cmd_generate(args, argv) -> int:
    try:
        spec = GenSpec(n=args.n, family=args.family, segments=args.segments,
                       segment_len=args.segment_len, sigma_noise=args.sigma_noise, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    started = time.perf_counter()
    series, truth = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, series, delimiter=",", fmt="%.17g")
    truth_path = out.with_name(out.name + ".truth")
    truth_path.write_text("".join(f"{c}\n" for c in truth))
    _write_json(out.with_name(out.name + ".manifest.json"), _manifest(
        "generate", argv, None, spec={"n": spec.n, "family": spec.family, "segments": spec.segments,
              "segment_len": spec.segment_len, "sigma_noise": spec.sigma_noise},
        output=str(out.resolve()),
        truth=str(truth_path.resolve()), seeds={"generator": args.seed},
        wall_seconds=time.perf_counter() - started,
    ))
    print(f"wrote {series.shape[0]} x {series.shape[1]} to {out}; {len(truth)} change points in {truth_path}")
    return EXIT_OK


def cmd_bench(args, argv) -> int:
    cfg = resolve_config(args)
    bench = BenchSpec(
        n_values=args.n_list, m_values=args.m_list if args.window is None else [args.window],
        families=args.families, variants=args.variants, seeds=args.seeds,
        segments=args.segments, segment_len=args.segment_len, base_config=cfg,
    )
    for fam in bench.families:
        if fam not in FAMILIES:
            raise UsageError(f"unknown family {fam!r}")
    for var in bench.variants:
        cfg.replace(variant=var)
    started = time.perf_counter()
    rows = run_benchmark(bench, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_results(rows, str(out))
    write_long(rows, str(out.with_name(out.stem + ".long.csv")))
    _write_json(out.with_name(out.name + ".manifest.json"), _manifest(
        "bench", argv, cfg, output=str(out.resolve()), seeds={"cells": list(args.seeds)},
        cells=len(rows), failed=sum(1 for r in rows if r.get("error")),
        wall_seconds=time.perf_counter() - started,
    ))
    for r in rows:
        if r.get("error"):
            print(f"cell n={r['n']} m={r['m']} {r['family']}/{r['variant']} seed={r['seed']}: {r['error']}")
        else:
            print(f"cell n={r['n']} m={r['m']} {r['family']}/{r['variant']} seed={r['seed']}: "
                  f"F1={r['f1']:.3f} P={r['precision']:.3f} R={r['recall']:.3f} {r['runtime_seconds']:.1f}s")
    return EXIT_RUN_ERROR if any(r.get("error") for r in rows) else EXIT_OK


def cmd_calibrate(args, argv) -> int:
    cfg = resolve_config(args)
    rows = []
    with _open_input(args.input) as fh:
        for row in iter_csv(fh):
            rows.append(row)
            if args.rows is not None and len(rows) >= args.rows:
                break
    started = time.perf_counter()
    result = calibrate(np.array(rows), cfg, safety=args.safety)
    print(json.dumps(result, sort_keys=True))
    if args.out:
        out = Path(args.out)
        _write_json(out, result)
        _write_json(out.with_name(out.name + ".manifest.json"), _manifest(
            "calibrate", argv, cfg, input=os.path.abspath(args.input), output=str(out.resolve()),
            seeds={k: v for k, v in cfg.to_flat().items() if k.endswith("seed")},
            wall_seconds=time.perf_counter() - started,
        ))
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    replay_argv = list(manifest["argv"])
    if args.out:
        idx = replay_argv.index("--out")
        replay_argv[idx + 1] = args.out
    return main(replay_argv)


COMMANDS = {
    "detect": cmd_detect,
    "generate": cmd_generate,
    "bench": cmd_bench,
    "calibrate": cmd_calibrate,
    "replay": cmd_replay,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"lightcd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except (UsageError, ConfigError) as exc:
        print(f"lightcd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LightError, ValueError, OSError) as exc:
        print(f"lightcd: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR


if __name__ == "__main__":
    sys.exit(main())
