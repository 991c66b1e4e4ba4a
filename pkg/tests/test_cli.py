import json
import subprocess
import sys
from pathlib import Path

import pytest

from caw.cli import main
from caw.config import ConfigError, from_dict, load_config
from caw.io import atomic_write_text, manifest_path
from caw.windows import box_window, window_to_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def manifest(out):
    return json.loads(manifest_path(out).read_text())


# ----------------------------------------------------------------- config

def test_configs_load():
    for name in ("uniform", "extended", "timelaw", "inadmissible"):
        cfg = load_config(CONFIGS / f"{name}.toml")
        assert len(cfg.config_hash()) == 64
    assert load_config(CONFIGS / "extended.toml").model.extended
    assert not load_config(CONFIGS / "uniform.toml").model.extended


def test_missing_model_key():
    with pytest.raises(ConfigError, match="missing model keys"):
        from_dict({"epsilon": 0.1})


def test_unknown_keys_rejected(tmp_path):
    text = (CONFIGS / "uniform.toml").read_text()
    p = tmp_path / "c.toml"
    p.write_text(text.replace("[schedule]", "bogus = 1\n[schedule]"))
    with pytest.raises(ConfigError, match="unknown model keys"):
        load_config(p)
    p.write_text(text + "typo = 3\n")
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(p)


def test_model_table_equivalent_to_top_level():
    raw = tomllib.loads((CONFIGS / "uniform.toml").read_text())
    sched = raw.pop("schedule")
    nested = from_dict({"model": raw, "schedule": sched})
    flat = from_dict(raw | {"schedule": sched})
    assert nested.model == flat.model
    assert nested.config_hash() == flat.config_hash()


def test_config_hash_changes_with_content():
    raw = tomllib.loads((CONFIGS / "uniform.toml").read_text())
    a = from_dict(dict(raw)).config_hash()
    raw["C"] = 0.02
    assert from_dict(raw).config_hash() != a


def test_bad_epsilon_list():
    raw = tomllib.loads((CONFIGS / "timelaw.toml").read_text())
    raw["sweep"]["epsilon_list"] = [0.1, 2.0]
    with pytest.raises(ConfigError):
        from_dict(raw)


# ----------------------------------------------------------------- io

def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "a.txt"
    atomic_write_text(p, "one")
    atomic_write_text(p, "two")
    assert p.read_text() == "two"
    assert sorted(x.name for x in p.parent.iterdir()) == ["a.txt"]


def test_atomic_write_failure_keeps_old(tmp_path):
    p = tmp_path / "a.txt"
    atomic_write_text(p, "old")

    class Boom:
        def __str__(self):
            raise RuntimeError

    with pytest.raises(TypeError):
        atomic_write_text(p, Boom())
    assert p.read_text() == "old"
    assert [x.name for x in tmp_path.iterdir()] == ["a.txt"]


# ----------------------------------------------------------------- cli

def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["schedule", "--config", "x.toml"])   # missing --out
    assert e.value.code == 1
    assert main(["schedule", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "s.json")]) == 1


def test_bad_log_level(tmp_path, monkeypatch):
    monkeypatch.setenv("CAW_LOG", "loud")
    assert main(["schedule", "--config", str(CONFIGS / "uniform.toml"), "--out", str(tmp_path / "s.json")]) == 1


def test_schedule_ok_and_manifest(tmp_path):
    out = tmp_path / "s.json"
    assert main(["schedule", "--config", str(CONFIGS / "uniform.toml"), "--out", str(out)]) == 0
    body = json.loads(out.read_text())
    assert body["certificate"]["ok"] and len(body["links"]) == 10
    m = manifest(out)
    cfg = load_config(CONFIGS / "uniform.toml")
    assert m["status"] == "ok" and m["config_hash"] == cfg.config_hash() == body["config_hash"]
    assert str(out) in m["artifacts"] and m["witness"] is None
    assert set(m["versions"]) == {"caw", "numpy", "scipy", "python"}


def test_schedule_infeasible_exit_2(tmp_path):
    out = tmp_path / "s.json"
    assert main(["schedule", "--config", str(CONFIGS / "inadmissible.toml"), "--out", str(out)]) == 2
    m = manifest(out)
    assert m["status"] == "infeasible"
    assert m["witness"]["check"] == "k-admissibility"
    assert m["config_hash"] == load_config(CONFIGS / "inadmissible.toml").config_hash()
    assert not out.exists()


def test_schedule_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["schedule", "--config", str(CONFIGS / "extended.toml"), "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_diffuse_rejects_mismatched_schedule(tmp_path):
    s = tmp_path / "s.json"
    assert main(["schedule", "--config", str(CONFIGS / "uniform.toml"), "--leaves", "2", "--out", str(s)]) == 0
    assert main(["diffuse", "--config", str(CONFIGS / "timelaw.toml"), "--schedule", str(s),
                 "--out", str(tmp_path / "o.csv")]) == 1
    assert main(["diffuse", "--config", str(CONFIGS / "uniform.toml"), "--schedule", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "o.csv")]) == 1


def test_diffuse_two_leaves(tmp_path):
    s, o = tmp_path / "s.json", tmp_path / "o.csv"
    assert main(["schedule", "--config", str(CONFIGS / "uniform.toml"), "--leaves", "2", "--out", str(s)]) == 0
    assert main(["diffuse", "--config", str(CONFIGS / "uniform.toml"), "--schedule", str(s), "--out", str(o)]) == 0
    lines = o.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["link", "stage", "step"]
    m = manifest(o)
    assert m["extra"]["max_residual"] <= 1e-9
    assert m["extra"]["p_drift"] >= 0.1 - 2 * 0.02


def _write_windows(tmp_path, c2=(0.0, 0.0)):
    w1 = box_window([0.0, 0.0], [1.0, 1.0], [0], ["u0", "s0"])
    w2 = box_window(list(c2), [1.0, 1.0], [0], ["u0", "s0"])
    p1, p2 = tmp_path / "w1.json", tmp_path / "w2.json"
    p1.write_text(json.dumps(window_to_json(w1)))
    p2.write_text(json.dumps(window_to_json(w2)))
    return str(p1), str(p2)


def test_check_align_builtins(tmp_path):
    w1, w2 = _write_windows(tmp_path)
    out = tmp_path / "r.json"
    assert main(["check-align", "--w1", w1, "--w2", w2, "--map", 'scale:{"factors": [3, 0.3]}',
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["aligned"] and rep["margin"] > 0
    assert main(["check-align", "--w1", w1, "--w2", w2, "--map", "identity", "--out", str(out)]) == 2
    assert manifest(out)["witness"]
    assert main(["check-align", "--w1", w1, "--w2", w2, "--map", "warp", "--out", str(out)]) == 1
    assert main(["check-align", "--w1", w1, "--w2", w2, "--map", "affine:{bad", "--out", str(out)]) == 1


def test_check_align_shifted_fails(tmp_path):
    w1, w2 = _write_windows(tmp_path, c2=(5.0, 0.0))
    out = tmp_path / "r.json"
    assert main(["check-align", "--w1", w1, "--w2", w2, "--map", 'scale:{"factors": [3, 0.3]}',
                 "--out", str(out)]) == 2


def test_shear_audit(tmp_path):
    out = tmp_path / "sh.csv"
    assert main(["shear-audit", "--config", str(CONFIGS / "uniform.toml"), "--grid", "20", "--N", "1", "10",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "axis_j,N,delta_lower,delta_measured,omega_upper,omega_measured"
    assert len(lines) == 3


def test_console_script(tmp_path):
    out = tmp_path / "s.json"
    r = subprocess.run([sys.executable, "-m", "caw.cli", "schedule", "--config", str(CONFIGS / "inadmissible.toml"),
                        "--out", str(out)], capture_output=True, text=True)
    assert r.returncode == 2
    assert "k-admissibility" in r.stderr
