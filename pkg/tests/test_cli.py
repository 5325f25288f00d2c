import csv
import json

import pytest

from varstring.cli import ConfigError, config_hash, expand_text, load_config, main, parse_config_text


def _files(d, suffix):
    return sorted(p for p in d.iterdir() if p.name.endswith(suffix))


def _json(d):
    (p,) = _files(d, ".json")
    return json.loads(p.read_text())


def test_parse_config_text():
    cfg = parse_config_text("preset = kdv  # comment\n\nT = 0.3\n")
    assert cfg == {"preset": "kdv", "T": "0.3"}


@pytest.mark.parametrize("text", ["bogus = 1", "T = 1\nT = 2", "no equals sign"])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_load_config_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("T = 0.3\n")
    cfg = load_config(str(p), ["N=512"])
    assert cfg["T"] == "0.3" and cfg["N"] == "512" and cfg["preset"] == "kdv"


def test_config_hash_ignores_output_dir():
    a = load_config(None, [])
    b = dict(a, output_dir="/elsewhere")
    assert config_hash("solve", a) == config_hash("solve", b)
    assert config_hash("solve", a) != config_hash("expand", a)


def test_expand_kdv():
    lines = expand_text(load_config(None, [])).splitlines()
    assert lines[0] == "u_t = u u_x + eps^2 u_xxx"
    assert lines[1] == "v0_t = v0 v0_x"
    assert lines[-1].startswith("0 = x + t u - f'(u)")


def test_expand_hopf_order():
    text = expand_text(load_config(None, ["order=0"]))
    assert text == "u_t = u u_x\nv0_t = v0 v0_x\n"


def test_verify_kdv(tmp_path, capsys):
    assert main(["verify", "--set", "gd_pairs=5", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS" in out
    assert _json(tmp_path)["pass"] is True


def test_verify_negative_control(tmp_path, capsys):
    assert main(["verify", "--set", "e_offset=1", "--set", "gd_pairs=2", "--output-dir", str(tmp_path)]) == 1
    assert "FAIL  S0 commutation [eps^4]" in capsys.readouterr().out


def test_solve_writes_csv_json_png(tmp_path):
    assert main(["solve", "--set", "N=256", "--set", "epsilons=0.1", "--output-dir", str(tmp_path)]) == 0
    (c,) = _files(tmp_path, ".csv")
    rows = list(csv.reader(c.open()))
    assert rows[0] == ["x", "v0", "v1", "v2", "u_eps0.1"]
    assert len(rows) == 257
    assert _files(tmp_path, ".png") and _files(tmp_path, "-v1.dat")
    assert _json(tmp_path)["v2_available"] is True


def test_solve_past_breaking_is_refused(tmp_path, capsys):
    code = main(["solve", "--set", "T=1.0", "--set", "N=256", "--output-dir", str(tmp_path)])
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["type"] == "NearCausticError"
    assert _json(tmp_path)["status"] == "error"


def test_bad_expression_exit_code(tmp_path, capsys):
    code = main(["expand", "--set", "preset=custom", "--set", "h=__import__('os')", "--output-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ConfigError" and err["error"]["message"].startswith("h: ")


def test_unknown_key_exit_code(tmp_path):
    assert main(["expand", "--set", "nope=1", "--output-dir", str(tmp_path)]) == 2


@pytest.mark.slow
def test_converge_is_reproducible(tmp_path):
    args = ["converge", "--set", "N=512", "--set", "epsilons=0.2, 0.14, 0.1, 0.07", "--set", "string_order=1"]
    assert main(args + ["--output-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--output-dir", str(tmp_path / "b")]) == 0
    for pa in sorted((tmp_path / "a").iterdir()):
        assert pa.read_bytes() == (tmp_path / "b" / pa.name).read_bytes(), pa.name
    summary = _json(tmp_path / "a")
    assert set(summary["slopes"]) >= {"err0", "err1", "err2", "sigma_sup"}
