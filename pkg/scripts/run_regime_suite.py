#!/usr/bin/env python3
"""Run the three contraction-regime experiments plus the decay controls.

Each experiment comes from a config file in configs/ and writes its
artifacts (margins CSV, report JSONL, manifest) into a subdirectory of
the chosen output root.  The negative control is expected to fail; the
script's exit status is 0 only when every run behaves as expected.
"""

import argparse
import sys
from pathlib import Path

from votelim.cli import run
from votelim.config import load_config

ROOT = Path(__file__).resolve().parent.parent

# (config, expected exit code)
EXPERIMENTS = [
    ("fast_clt.yaml", 0),
    ("critical_clt.yaml", 0),
    ("subcritical_base.yaml", 0),
    ("subcritical_decay.yaml", 0),
    ("decay_negative_control.yaml", 1),
    ("llt_baseline.yaml", 0),
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/regimes", help="output root directory")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    failures = 0
    for name, expected in EXPERIMENTS:
        cfg = load_config(ROOT / "configs" / name)
        cfg.workers = args.workers
        out_dir = Path(args.out) / name.removesuffix(".yaml")
        print(f"== {name} -> {out_dir}")
        code = run(cfg, out_dir)
        verdict = "as expected" if code == expected else f"UNEXPECTED (got {code}, want {expected})"
        print(f"   exit {code} {verdict}")
        failures += code != expected
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
