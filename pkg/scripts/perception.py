"""Overfit and held-out sign-accuracy checks for the centerline coefficient regressor."""

import argparse
import json
from dataclasses import asdict
from pathlib import Path

from arlane.config import load_config
from arlane.experiments import run_perception

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=str(ROOT / "configs" / "perception.ini"))
    args = p.parse_args()
    print(json.dumps(asdict(run_perception(load_config(args.config))), indent=1))


if __name__ == "__main__":
    main()
