"""Command-line entry point ``cbtomo``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from . import __version__
from .config import ConfigError, load, loads, parse_tolerance_overrides


def preset_names() -> list[str]:
    files = resources.files("cbtomo") / "presets"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str):
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(preset_names())})")
    return loads((resources.files("cbtomo") / "presets" / f"{name}.toml").read_text())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory (default: config output_dir or out/<name>)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and map construction")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--tolerance", action="append", metavar="KEY=VALUE", default=[],
                   help="override a [tolerance] entry; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbtomo", description="Charge-basis tomography simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a TOML config file")
    p_run.add_argument("config")
    _common(p_run)
    p_pre = sub.add_parser("preset", help="run a built-in preset")
    p_pre.add_argument("name")
    _common(p_pre)
    sub.add_parser("list-presets", help="list built-in presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-presets":
        for name in preset_names():
            print(f"{name:8s} {load_preset(name).description}")
        return 0
    try:
        cfg = load(args.config) if args.command == "run" else load_preset(args.name)
        cfg = cfg.with_overrides(seed=args.seed, tolerance=parse_tolerance_overrides(args.tolerance))
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    from .pipelines import run

    try:
        manifest = run(cfg, args.out, args.threads)
    except Exception as err:  # numeric failures surface with their context
        print(f"error: {cfg.kind} run {cfg.name!r} failed: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest.outputs)} files to {manifest.out_dir} in {manifest.wall_clock:.2f} s")
    if manifest.summary:
        print(json.dumps(manifest.summary, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
