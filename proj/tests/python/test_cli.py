import csv
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
RECOMPUTE = ROOT / "tools" / "recompute_metrics.py"


def run(cmd, **kw):
    return subprocess.run(cmd, capture_output=True, text=True, timeout=600, **kw)


def test_run_writes_artifacts_and_metrics_recompute(rvio_bin, short_config, tmp_path):
    cfg = short_config()
    out = tmp_path / "run"
    r = run([rvio_bin, "run", "--config", str(cfg), "--out", str(out), "--mode", "range_vio"])
    assert r.returncode == 0, r.stderr
    for name in ("config.json", "truth.csv", "estimate.csv", "errors.csv", "metrics.csv", "gates.csv"):
        assert (out / name).exists(), name
    with open(out / "metrics.csv") as f:
        metrics = {row["metric"]: row["value"] for row in csv.DictReader(f)}
    assert float(metrics["distance_m"]) > 9.0
    check = run([sys.executable, str(RECOMPUTE), str(out)])
    assert check.returncode == 0, check.stdout + check.stderr


def test_seed_flag_changes_streams(rvio_bin, short_config, tmp_path):
    cfg = short_config()
    a = run([rvio_bin, "run", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "a")])
    b = run([rvio_bin, "run", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "b")])
    c = run([rvio_bin, "run", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "c")])
    assert a.returncode == b.returncode == c.returncode == 0
    read = lambda d: (tmp_path / d / "estimate.csv").read_text()
    assert read("a") == read("b")
    assert read("a") != read("c")


def test_compare_and_observability_verbs(rvio_bin, short_config, tmp_path):
    cfg = short_config()
    r = run([rvio_bin, "compare", "--config", str(cfg), "--out", str(tmp_path / "cmp")])
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "cmp" / "compare.csv").exists()
    r = run([rvio_bin, "observability", "--config", str(cfg), "--mode", "vio",
             "--out", str(tmp_path / "obs")])
    assert r.returncode == 0, r.stderr
    assert "unobservable" in r.stdout


def test_config_error_exit_code(rvio_bin, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"trajectory": {"duration": -1}}')
    assert run([rvio_bin, "run", "--config", str(bad)]).returncode == 2
    assert run([rvio_bin, "run", "--config", str(tmp_path / "missing.json")]).returncode == 2
    bad.write_text("{not json")
    assert run([rvio_bin, "run", "--config", str(bad)]).returncode == 2


def test_divergence_exit_code(rvio_bin, short_config, tmp_path):
    cfg = short_config(sensors={"accel_noise_density": 1e200})
    r = run([rvio_bin, "run", "--config", str(cfg), "--out", str(tmp_path / "div")])
    assert r.returncode == 3, r.stdout + r.stderr
    assert "DIVERGED" in r.stdout


def test_recompute_detects_tampering(rvio_bin, short_config, tmp_path):
    cfg = short_config()
    out = tmp_path / "run"
    assert run([rvio_bin, "run", "--config", str(cfg), "--out", str(out)]).returncode == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    lines = [
        "max_position_error_m,123.0" if ln.startswith("max_position_error_m,") else ln
        for ln in lines
    ]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    assert run([sys.executable, str(RECOMPUTE), str(out)]).returncode == 1
    assert run([sys.executable, str(RECOMPUTE), str(tmp_path / "nowhere")]).returncode == 2
