import csv
import subprocess
import sys

import pytest

from arlane.cli import main
from arlane.nn import gradcheck

TINY = """
[agent]
variant = ddpg
hidden = 8, 8
batch_size = 8
[env]
max_steps = 20
[train]
episodes = 2
warmup_transitions = 8
[eval]
n_routes = 2
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY)
    return p


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path / "r")]) == 2
    assert "absent.ini" in capsys.readouterr().err


def test_variant_typo_exits_2(tiny, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", str(tiny), "--variant", "ar-dpg"])
    assert exc.value.code == 2
    assert "ar-rdpg" in capsys.readouterr().err


def test_bad_config_key_exits_2(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[train]\nepisodez = 3\n")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "r")]) == 2


def test_train_then_eval(tiny, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", str(tiny), "--out", str(run), "--seed", "1"]) == 0
    for f in ("agent.ckpt", "curve.csv", "manifest.json", "config.ini"):
        assert (run / f).is_file()
    assert "config_file_sha256" in (run / "manifest.json").read_text()
    out = tmp_path / "eval"
    assert main(["eval", f"smoke={run}", "--config", str(tiny), "--out", str(out), "--routes", "3"]) == 0
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert len(rows) == 3 and {r["variant"] for r in rows} == {"smoke"}


def test_train_and_eval_are_byte_reproducible(tiny, tmp_path):
    for tag in ("a", "b"):
        assert main(["train", "--config", str(tiny), "--out", str(tmp_path / tag)]) == 0
        assert main(["eval", f"run={tmp_path / tag}", "--config", str(tiny), "--out", str(tmp_path / f"e{tag}")]) == 0
    for f in ("agent.ckpt", "curve.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    for f in ("report.csv", "report.txt"):
        assert (tmp_path / "ea" / f).read_bytes() == (tmp_path / "eb" / f).read_bytes()


def test_resume_flag(tiny, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", str(tiny), "--out", str(run)]) == 0
    assert main(["train", "--config", str(tiny), "--out", str(run), "--resume"]) == 0


def test_eval_missing_checkpoint_exits_2(tiny, tmp_path):
    assert main(["eval", str(tmp_path / "none"), "--config", str(tiny), "--out", str(tmp_path / "e")]) == 2


def test_gradcheck_pass_and_injected_failure(monkeypatch, capsys):
    assert main(["gradcheck", "--seeds", "1"]) == 0
    report = capsys.readouterr().out
    assert "conv" in report and "max rel err" in report

    def broken(rng):
        probe = gradcheck._dense(rng)
        real = probe.back
        probe.back = lambda g: {"x": 2.0 * real(g)["x"]}
        return probe

    monkeypatch.setattr(gradcheck, "PROBES", {"broken": broken})
    assert main(["gradcheck", "--seeds", "1"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_render_dataset(tmp_path):
    out = tmp_path / "ds"
    assert main(["render-dataset", "--count", "10", "--out", str(out), "--seed", "2"]) == 0
    assert len(list(out.glob("frame_*.pgm"))) == 10 and len(list(out.glob("frame_*.json"))) == 10
    again = tmp_path / "ds2"
    assert main(["render-dataset", "--count", "10", "--out", str(again), "--seed", "2"]) == 0
    for f in sorted(out.glob("frame_*")):
        assert f.read_bytes() == (again / f.name).read_bytes()


def test_unwritable_out_path_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["render-dataset", "--count", "2", "--out", str(blocker / "x")]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "arlane.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "render-dataset" in r.stdout
