import csv
import hashlib
import json
import shutil
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from libivae.cli import main
from libivae.experiment import ExperimentConfig, derive_seed

SVG = "{http://www.w3.org/2000/svg}"

TINY = {
    "scale": "desk", "kinds": ["LinearJTEx", "Gaussian"], "replicates": 1, "restarts": 1,
    "methods": ["vae", "libi"], "epochs": 40, "sizes": [120, 120, 120],
    "eval": {"S": 50, "subsample": 50, "repetitions": 20, "aggregated": 200},
}


def write_config(path: Path, **changes) -> Path:
    path.write_text(json.dumps({**TINY, **changes}))
    return path


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def csv_rows(path: Path) -> list[list[str]]:
    lines = path.read_text().splitlines()
    return list(csv.reader(lines[1:]))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg = write_config(root / "tiny.json")
    before = sha(cfg)
    out = root / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert sha(cfg) == before
    return root, out, cfg


def test_gen_counts_and_determinism(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    for name in ("a", "b"):
        assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / name), "--replicates", "3"]) == 0
    files = sorted(p.name for p in (tmp_path / "a" / "datasets").glob("*_r*.json"))
    assert len(files) == 6
    for f in files:
        assert sha(tmp_path / "a" / "datasets" / f) == sha(tmp_path / "b" / "datasets" / f)
    manifest = json.loads((tmp_path / "a" / "datasets" / "manifest.json").read_text())
    assert set(manifest["files"]) == set(files)
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "1"]) == 0
    assert sha(tmp_path / "c" / "datasets" / "LinearJTEx_r0.json") != sha(tmp_path / "a" / "datasets" / "LinearJTEx_r0.json")


def test_derive_seed_stable():
    assert derive_seed(0, "LinearJTEx", 0, "data") == derive_seed(0, "LinearJTEx", 0, "data")
    assert derive_seed(0, "LinearJTEx", 0, "data") != derive_seed(1, "LinearJTEx", 0, "data")
    assert 0 <= derive_seed(5, "x") < 2**63


def test_config_precedence(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    c = ExperimentConfig.load(cfg, None, {"epochs": 7, "out": "elsewhere"})
    assert c.epochs == 7 and c.kinds == TINY["kinds"] and c.eval["S"] == 50 and c.eval["k"] == 1
    assert c.hash == ExperimentConfig.load(cfg, None, {"epochs": 7, "out": "other", "jobs": 3}).hash
    assert c.hash != ExperimentConfig.load(cfg, None, {"epochs": 8}).hash
    assert ExperimentConfig.resolve().scale == "paper"


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kinds": ["Spiral"]}))
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text(json.dumps({"epoch": 3}))
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    cfg = write_config(tmp_path / "c.json")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "empty")]) == 2
    assert main(["report", "--config", str(cfg), "--out", str(tmp_path / "empty")]) == 2
    assert main(["gen", "--config", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "error" in capsys.readouterr().err


def test_table(tiny_run):
    _, out, _ = tiny_run
    table = out / "report" / "table.csv"
    lines = table.read_text().splitlines()
    assert lines[0].startswith("# libivae ")
    rows = csv_rows(table)
    assert rows[0][:4] == ["world", "method", "gridpoint", "test_ll_mean"]
    assert len(rows) - 1 == len(TINY["kinds"]) * len(TINY["methods"])
    assert {(r[0], r[1]) for r in rows[1:]} == {(k, m) for k in TINY["kinds"] for m in TINY["methods"]}


def test_run_layout(tiny_run):
    _, out, _ = tiny_run
    assert len(list((out / "runs").glob("*.json"))) == 2 * 2
    names = {p.name for p in (out / "eval").glob("*.json")}
    assert any("ground-truth" in n for n in names)
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["meta"]["config_hash"] == ExperimentConfig.load(out / "config.json").hash
    summary = json.loads((out / "report" / "summary.json").read_text())
    assert summary["fig1"]["argmin"]["i"] == 19 and summary["fig1"]["argmin"]["j"] == 0


def test_figures_consistent(tiny_run):
    _, out, _ = tiny_run
    rep = out / "report"
    stamp = (rep / "table.csv").read_text().splitlines()[0][2:]
    for name in ("fig1cd_data", "fig1ef_aggposterior"):
        rows = csv_rows(rep / f"{name}.csv")[1:]
        tree = ET.parse(rep / f"{name}.svg")
        pts = [c for c in tree.iter(f"{SVG}circle") if c.get("class") == "pt"]
        assert len(pts) == len(rows) > 0
        assert stamp in (rep / f"{name}.svg").read_text()
        assert (rep / f"{name}.csv").read_text().startswith(f"# {stamp}")
    for name in ("fig1a_pm_grid", "fig1b_mi_grid"):
        rows = csv_rows(rep / f"{name}.csv")[1:]
        cells = [r for r in ET.parse(rep / f"{name}.svg").iter(f"{SVG}rect") if r.get("class") == "cell"]
        assert len(cells) == len(rows) == 400
    for kind in TINY["kinds"]:
        assert (rep / f"posterior_means_{kind}.csv").exists()


def test_resume_skips_finished_runs(tiny_run, tmp_path):
    _, out, cfg = tiny_run
    copy = tmp_path / "out"
    shutil.copytree(out, copy)
    runs = sorted((copy / "runs").glob("*.json"))
    stamps = {p: p.stat().st_mtime_ns for p in runs}
    data = {p: sha(p) for p in (copy / "datasets").glob("*.json")}
    runs[0].unlink()
    assert main(["train", "--out", str(copy), "--resume"]) == 0
    assert runs[0].exists()
    for p in runs[1:]:
        assert p.stat().st_mtime_ns == stamps[p]
    for p, h in data.items():
        assert sha(p) == h
    assert sha(runs[0]) == sha(out / "runs" / runs[0].name)


def test_report_check_prints_lines(tiny_run, capsys):
    _, out, _ = tiny_run
    code = main(["report", "--out", str(out), "--check"])
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert code in (0, 1)
    assert len(lines) >= 2
    assert code == (1 if any(l.startswith("FAIL") for l in lines) else 0)


def test_sweep_fig1(tmp_path):
    assert main(["sweep-fig1", "--out", str(tmp_path), "--grid", "5", "--desk"]) == 0
    rows = csv_rows(tmp_path / "report" / "fig1a_pm_grid.csv")
    assert len(rows) - 1 == 25


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "libivae.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep-fig1" in res.stdout
