import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from stegokit.cli import main
from stegokit.imaging import Channels, write_png

from conftest import random_image


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.splitlines()
    return code, [json.loads(line) for line in out]


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture
def cover_png(tmp_path, rng):
    path = tmp_path / "cover.png"
    write_png(path, random_image(rng, 64, 64, Channels.RGB))
    return path


@pytest.mark.parametrize("app", ["stegmaster", "davinci", "mobistego", "pocketstego", "stegm"])
def test_embed_extract_round_trip(tmp_path, capsys, cover_png, app):
    msg = tmp_path / "msg.bin"
    msg.write_bytes(b"the eagle has landed")
    stego = tmp_path / "stego.png"
    code, lines = run(capsys, "embed", "--app", app, "--in", cover_png, "--msg-file", msg,
                      "--password", "pw", "--out", stego)
    assert code == 0
    assert lines[0]["config"]["app"] == app and "seed" in lines[0]["config"]
    back = tmp_path / "back.bin"
    code, lines = run(capsys, "extract", "--app", app, "--in", stego, "--password", "pw", "--out", back)
    assert code == 0
    assert back.read_bytes() == msg.read_bytes()


def test_detect_directory(tmp_path, capsys, cover_png):
    msg = tmp_path / "m.txt"
    msg.write_bytes(b"hello")
    d = tmp_path / "imgs"
    d.mkdir()
    run(capsys, "embed", "--app", "davinci", "--in", cover_png, "--msg-file", msg, "--out", d / "a.png")
    run(capsys, "embed", "--app", "stegmaster", "--in", cover_png, "--msg-file", msg, "--out", d / "b.png")
    report = tmp_path / "r.jsonl"
    code, lines = run(capsys, "detect", "--all", "--in", d, "--report", report)
    assert code == 0
    rows = [json.loads(x) for x in report.read_text().splitlines()]
    assert len(rows) == 8
    hits = {(Path(r["path"]).name, r["matched_app"]) for r in rows if r["verdict"]}
    assert ("a.png", "davinci") in hits and ("b.png", "stegmaster") in hits
    assert ("a.png", "stegmaster") not in hits and ("b.png", "davinci") not in hits
    assert lines[-1]["images"] == 2


def test_exit_codes(tmp_path, capsys, cover_png):
    assert main([]) == 1
    assert main(["embed", "--app", "nope"]) == 1
    assert main(["detect", "--in", str(cover_png)]) == 1  # neither --app nor --all
    assert main(["extract", "--app", "davinci", "--in", str(tmp_path / "missing.png")]) == 2
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"garbage")
    assert main(["extract", "--app", "pocketstego", "--in", str(bad)]) == 2
    # cover carries no DaVinci payload
    assert main(["extract", "--app", "davinci", "--in", str(cover_png)]) == 2
    capsys.readouterr()


def _gen_config(tmp_path):
    cfg = {"output_dir": "ds", "apps": ["stegm", "pocketstego"], "rates": [0.05, 0.2],
           "synth": {"count": 4, "width": 48, "height": 48, "smoothing_radius": 3, "seed": 2, "channels": "rgb"},
           "master_seed": 1}
    path = tmp_path / "gen.json"
    path.write_text(json.dumps(cfg))
    return path


def _tree(root):
    return {p.relative_to(root).as_posix(): sha(p) for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_pipeline_and_determinism(tmp_path, capsys):
    cfg = _gen_config(tmp_path)
    code, lines = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "a", "--threads", 1)
    assert code == 0 and lines[-1]["records"] == 4 * 2 * 3 and lines[-1]["problems"] == 0
    code, _ = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "b", "--threads", 2)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")

    feats = tmp_path / "f.csv"
    code, lines = run(capsys, "features", "--manifest", tmp_path / "a" / "manifest.jsonl", "--out", feats,
                      "--app", "stegm", "--rates", "0.2")
    assert code == 0 and lines[-1]["rows"] == 8 and lines[-1]["dim"] == 1014

    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    assert run(capsys, "train", "--features", feats, "--model", m1, "--L", 5, "--d-sub", 16, "--seed", 3)[0] == 0
    assert run(capsys, "train", "--features", feats, "--model", m2, "--L", 5, "--d-sub", 16, "--seed", 3)[0] == 0
    assert sha(m1) == sha(m2)

    code, lines = run(capsys, "predict", "--model", m1, "--features", feats)
    assert code == 0
    assert len([x for x in lines if "pred" in x]) == 8
    assert set(lines[-1]["report"]) == {"p_md", "p_fa", "p_e", "n_cover", "n_stego"}


def test_synth_covers(tmp_path, capsys):
    code, lines = run(capsys, "synth-covers", "--preset", "noisy", "--count", 2, "--width", 16,
                      "--height", 8, "--out", tmp_path / "s", "--seed", 4)
    assert code == 0
    assert lines[1]["effective"]["noise_sigma"] == 8.0 and lines[1]["effective"]["seed"] == 4
    assert sorted(p.name for p in (tmp_path / "s").iterdir()) == ["synth00000.png", "synth00001.png"]


def test_evaluate_grid(tmp_path, capsys):
    cfg = {"output_dir": "ds", "apps": ["stegm"], "rates": [0.05, 0.4],
           "synth": {"count": 24, "width": 48, "height": 48, "seed": 1}, "master_seed": 1}
    (tmp_path / "gen.json").write_text(json.dumps(cfg))
    assert run(capsys, "gen-dataset", "--config", tmp_path / "gen.json")[0] == 0
    grid = {"manifest": "ds/manifest.jsonl", "app": "stegm", "train_rates": [0.05, 0.4],
            "test_rates": [0.05, 0.4], "n_train_pairs": 12, "n_test_pairs": 12, "L": 5, "d_sub": 32}
    (tmp_path / "grid.json").write_text(json.dumps(grid))
    code, lines = run(capsys, "evaluate", "--grid", tmp_path / "grid.json", "--csv", tmp_path / "g.csv",
                      "--out", tmp_path / "g.json")
    assert code == 0
    assert len(lines[-1]["cells"]) == 4
    assert (tmp_path / "g.csv").read_text().startswith("test\\train,0.05,0.4")
    assert main(["evaluate"]) == 1
    capsys.readouterr()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stegokit", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-dataset" in proc.stdout
