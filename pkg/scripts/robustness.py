"""Train all four variants under friction and occlusion, validate on paired routes, check the RMSE ordering."""

import argparse
import json
import logging
from pathlib import Path

from arlane.agents.core import VARIANTS
from arlane.config import load_config
from arlane.experiments import full_ordering, run_robustness

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=str(ROOT / "configs" / "robustness.ini"))
    p.add_argument("--out", default="runs/robustness")
    p.add_argument("--seed", type=int)
    p.add_argument("--variants", default=",".join(VARIANTS))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = run_robustness(load_config(args.config), args.out, args.variants.split(","), args.seed)
    print(res.report.to_text(), end="")
    for c in res.checks:
        print(("PASS " if c.passed else "FAIL ") + c.describe())
    print("ordering:", full_ordering(res.report))
    print(f"train {res.train_seconds}, eval {res.eval_seconds:.0f} s, total {res.seconds:.0f} s")
    summary = {
        "passed": res.passed,
        "ordering": full_ordering(res.report),
        "checks": [{"lhs": c.lhs, "rhs": c.rhs, "relation": c.relation, "mean_diff": c.mean_diff, "se": c.se,
                    "passed": c.passed} for c in res.checks],
        "train_seconds": res.train_seconds,
        "eval_seconds": res.eval_seconds,
    }
    Path(args.out, "robustness.json").write_text(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
