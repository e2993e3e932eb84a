"""Train DDPG on the easy regime and report when the return threshold is reached."""

import argparse
import json
import logging
from dataclasses import asdict
from pathlib import Path

from arlane.config import load_config
from arlane.experiments import run_smoke

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=str(ROOT / "configs" / "smoke.ini"))
    p.add_argument("--out", default="runs/smoke")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = run_smoke(load_config(args.config), args.out)
    summary = {**asdict(res), "passed": res.passed}
    Path(args.out, "smoke.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
