"""
alpha-sde command line.

    python backend/main.py run --config configs/wdw.json [--out DIR] [--seed N] [--threads N]
    python backend/main.py presets
"""
import argparse
import logging
import sys
from typing import List, Optional

from core.config import settings
from services.run_pipeline import run_config_file
from services.sde.config import PRESET_CATALOG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Integrate alpha-sense SDEs, build Fokker-Planck operators and run the acceptance checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("--config", required=True, help="path to the JSON run configuration")
    run.add_argument("--out", help="output directory (default: config output.directory, then ALPHA_SDE_OUTPUT_DIR)")
    run.add_argument("--seed", type=int, help="override sim.seed (unsigned 64-bit)")
    run.add_argument("--threads", type=int, help=f"worker threads (default {settings.DEFAULT_THREADS})")
    run.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    sub.add_parser("presets", help="list the model presets and their default parameters")
    return parser


def list_presets() -> int:
    for name, entry in PRESET_CATALOG.items():
        params = ", ".join(f"{k}={v:g}" for k, v in entry["params"].items()) or "-"
        print(f"{name:<20} dim={entry['state_dim']}  {params}")
        print(f"{'':<20} {entry['description']}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "presets":
        return list_presets()
    return run_config_file(args.config, out=args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
