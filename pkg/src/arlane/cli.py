"""Command-line entry point: ``arlane {train,eval,gradcheck,render-dataset}``.

Exit codes: 0 success, 1 run failure (NaN abort, failed gradient check),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agents.core import VARIANTS
from .config import ConfigError, RunConfig, dump_config, load_config
from .nn.checkpoint import CheckpointError

log = logging.getLogger("arlane")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory not writable: {path} ({exc.strerror or exc})") from exc
    return path


def _write_config_snapshot(out: Path, cfg: RunConfig) -> None:
    (out / "config.ini").write_text(dump_config(cfg))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_train(args) -> int:
    from .training import Trainer

    cfg = load_config(args.config)
    tc = cfg.train_config(args.variant, args.seed, args.friction, args.alpha)
    out = _ensure_dir(Path(args.out or f"runs/{tc.agent.variant}_seed{tc.seed}"))
    _write_config_snapshot(out, cfg)
    if args.resume and (out / "trainer_state.pkl").is_file():
        trainer = Trainer.resume(out)
        log.info("resuming %s at episode %d", out, trainer.episode)
    else:
        trainer = Trainer(tc)

    def report(rec):
        if rec.episode % max(1, args.log_every) == 0:
            log.info("episode %d return %.2f moving_avg %.2f steps %d %s", rec.episode, rec.ret,
                     rec.moving_avg, rec.steps, rec.verdict)

    result = trainer.train(out, on_episode=report)
    man = json.loads((out / "manifest.json").read_text())
    man["config_file"] = cfg.source
    man["config_file_sha256"] = cfg.sha256
    (out / "manifest.json").write_text(json.dumps(man, sort_keys=True, indent=1))
    if result.status != "ok":
        print(f"training aborted: {result.message}; last good checkpoint kept in {out}", file=sys.stderr)
        return EXIT_FAIL
    print(f"trained {tc.agent.variant} for {len(result.curve)} episodes -> {out}")
    return EXIT_OK


def _checkpoint_map(specs: list[str]) -> dict[str, Path]:
    out = {}
    for spec in specs:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            path = spec
            p = Path(spec)
            name = (p if p.is_dir() else p.parent).name
        out[name] = Path(path)
    return out


def cmd_eval(args) -> int:
    from .evaluation import load_agents, validate

    cfg = load_config(args.config)
    ec = cfg.eval_config(args.routes, args.friction, args.alpha, args.seed)
    agents = load_agents(_checkpoint_map(args.checkpoints))
    out = _ensure_dir(Path(args.out or "runs/eval"))
    report = validate(agents, ec)
    report.write(out)
    data = json.loads((out / "report.json").read_text())
    data["config_file"] = cfg.source
    data["config_file_sha256"] = cfg.sha256
    (out / "report.json").write_text(json.dumps(data, sort_keys=True, indent=1))
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .nn import gradcheck

    results = gradcheck.run_suite(n_seeds=args.seeds)
    worst = gradcheck.summarize(results)
    ok = all(r.passed for r in results)
    for layer, err in worst.items():
        status = "ok" if err < gradcheck.REL_TOL else "FAIL"
        print(f"{layer:<20} max rel err {err:.3e}  {status}")
    print("gradcheck passed" if ok else "gradcheck FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_render_dataset(args) -> int:
    from .perception import DatasetSpec, build_dataset, frame_label_json
    from .snow import write_labeled_frame

    cfg = load_config(args.config)
    d = cfg.dataset
    seed = d.seed if args.seed is None else args.seed
    if args.count is not None:
        n_sunny = args.count // 2
        n_snowy = args.count - n_sunny
    else:
        n_sunny, n_snowy = d.n_sunny, d.n_snowy
    if n_sunny + n_snowy < 1:
        raise UsageError("dataset needs at least one frame")
    out = _ensure_dir(Path(args.out or "runs/dataset"))
    spec = DatasetSpec(cfg.env.graph, cfg.env.view, cfg.env.occlusion, d.n_graphs, d.max_offset, d.max_heading)
    frames = build_dataset(n_sunny, n_snowy, seed, spec)
    for i, fr in enumerate(frames):
        write_labeled_frame(out, i, fr.image, frame_label_json(fr))
    manifest = {"seed": seed, "n_sunny": n_sunny, "n_snowy": n_snowy, "config_file": cfg.source,
                "config_file_sha256": cfg.sha256}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arlane", description="Action-robust lane keeping under snow occlusion.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one variant")
    t.add_argument("--config", help="INI run config")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--seed", type=int)
    t.add_argument("--friction", type=float, help="training friction coefficient")
    t.add_argument("--alpha", type=float, help="adversary mixing factor")
    t.add_argument("--out", help="run directory")
    t.add_argument("--resume", action="store_true", help="continue from trainer_state.pkl in --out")
    t.add_argument("--log-every", type=int, default=10)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="validate checkpoints on paired routes")
    e.add_argument("checkpoints", nargs="+", help="run dirs or NAME=PATH checkpoint specs")
    e.add_argument("--config")
    e.add_argument("--routes", type=int)
    e.add_argument("--friction", type=float)
    e.add_argument("--alpha", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    g.add_argument("--seeds", type=int, default=20)
    g.set_defaults(func=cmd_gradcheck)

    r = sub.add_parser("render-dataset", help="write labeled PGM+JSON frames")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--count", type=int, help="total frames, split evenly sunny/snowy")
    r.add_argument("--out")
    r.set_defaults(func=cmd_render_dataset)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
