import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibermetric.cli import ConfigError, dump_config, main, parse_config, resolve

ROOT = Path(__file__).resolve().parents[1]


def small_product(tmp_path, **extra):
    doc = {
        "experiment": "solve-family",
        "parameters": {"family": {"n_side": 16, "base": {"m_side": 9}, "omega": {"kind": "product"}}},
        **extra,
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_bad_type_names_the_field():
    with pytest.raises(ConfigError) as ei:
        parse_config({"experiment": "solve-family", "parameters": {"family": {"n_side": "abc"}}})
    assert "parameters.family.n_side" in str(ei.value)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "solve-family", "parameters": {"famly": {}}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "no-such-thing"})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "sequences", "extra": 1})


def test_interface_names_registered():
    for name in ("identity-129", "identity-248", "lemma14", "sobolev", "poincare", "counterexample"):
        assert resolve(parse_config({"experiment": name})).parameters


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["solve-family", "sequences", "smoothing", "counterexample", "gradient"]))
def test_config_roundtrip(seed, name):
    cfg = resolve(parse_config({"experiment": name, "seed": seed}))
    again = parse_config(json.loads(dump_config(cfg)))
    assert again == cfg
    assert resolve(again) == cfg


def test_run_replay_and_tamper(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(small_product(tmp_path)), "--out", str(out), "--workers", "1"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["verdict"] == "pass" and man["seed_source"] == "config"
    assert "timings.json" not in man["files"]
    assert main(["replay", str(out), "--workers", "2"]) == 0
    target = out / sorted(man["files"])[0]
    target.write_bytes(target.read_bytes() + b"\0")
    assert main(["replay", str(out), "--workers", "1"]) == 2
    assert "differs from manifest" in capsys.readouterr().out


def test_replay_without_manifest(tmp_path):
    assert main(["replay", str(tmp_path)]) == 1


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FIBERMETRIC_SEED", "5")
    out = tmp_path / "run"
    assert main(["run", str(small_product(tmp_path)), "--out", str(out), "--workers", "1"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 5 and man["seed_source"] == "env"
    monkeypatch.setenv("FIBERMETRIC_SEED", "five")
    assert main(["run", str(small_product(tmp_path)), "--out", str(out)]) == 1


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"experiment": "solve-family", "parameters": {"family": {"n_side": "abc"}}}))
    assert main(["run", str(p)]) == 1
    assert "parameters.family.n_side" in capsys.readouterr().err


def test_plotdata(tmp_path):
    out = tmp_path / "run"
    main(["run", str(small_product(tmp_path)), "--out", str(out), "--workers", "1"])
    assert main(["plotdata", str(out)]) == 0
    xyz = sorted((out / "plotdata").glob("*.xyz"))
    assert xyz
    assert len(xyz[0].read_text().splitlines()) == 16 * 16


def test_plotdata_loglog(tmp_path):
    p = tmp_path / "seq.json"
    p.write_text(json.dumps({"experiment": "lemma14", "parameters": {"family": {"n_side": 32}, "schedule": {"start": 0.1, "count": 3}}}))
    out = tmp_path / "run"
    main(["run", str(p), "--out", str(out), "--workers", "1"])
    assert main(["plotdata", str(out)]) == 0
    loglog = sorted((out / "plotdata").glob("*.loglog.txt"))
    assert loglog and loglog[0].read_text().splitlines()[-1].startswith("# fitted order:")


def test_plotdata_empty_dir(tmp_path, capsys):
    assert main(["plotdata", str(tmp_path)]) == 0
    assert "nothing to convert" in capsys.readouterr().out


def test_shipped_configs_parse():
    files = sorted((ROOT / "configs").glob("*.json"))
    assert len(files) >= 2
    for f in files:
        resolve(parse_config(json.loads(f.read_text())))
