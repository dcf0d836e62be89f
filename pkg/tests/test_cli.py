import hashlib
import json
import os

import pytest

from wcl import cli
from wcl.config import load_config, parse_config_text, config_from_dict
from wcl.lattice import ConfigError


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_config_defaults(tmp_path):
    cfg = load_config(None)
    assert (cfg.epsilon, cfg.R, cfg.A, cfg.N, cfg.K_tr, cfg.seed) == (0.1, 8, 3, 3, 3, 0)
    assert cfg.T1 == pytest.approx(0.1 ** (-8.0 / 3.0))
    assert cfg.psi_name == "rational"


def test_config_rejects_out_of_range(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("N = 9\n")
    with pytest.raises(ConfigError):
        load_config(str(p))
    with pytest.raises(ConfigError) as err:
        config_from_dict(parse_config_text("frobnicate = 1"))
    assert "frobnicate" in str(err.value)
    with pytest.raises(ConfigError):
        config_from_dict({"A": "4"})


def test_config_t1_autoderived(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("epsilon = 0.2\nR = 4\nK_tr = 1\n")
    cfg = load_config(str(p))
    assert cfg.T1 == pytest.approx(0.2 ** (-8.0 / 3.0))


def test_cli_determinism(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    for out in (out1, out2):
        rc = cli.main(
            ["--out-dir", str(out), "symbols", "dump", "--which", "n3",
             "--grid", "lin:-2:2:6", "--out", "n3.csv"]
        )
        assert rc == 0
    assert sha(out1 / "n3.csv") == sha(out2 / "n3.csv")
    man = json.load(open(out1 / "manifest-symbols-dump.json"))
    assert man["outputs"][0]["sha256"] == sha(out1 / "n3.csv")


def test_cli_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["symbols", "dump", "--bogus", "1"])
    assert exc.value.code == 2


def test_cli_malformed_config_names_key(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("epsilonn = 0.1\n")
    rc = cli.main(
        ["--config", str(p), "--out-dir", str(tmp_path), "amplitudes", "gamma1"]
    )
    assert rc == 2
    assert "epsilonn" in capsys.readouterr().err


def test_cli_diagrams_and_molecules(tmp_path):
    rc = cli.main(
        ["--out-dir", str(tmp_path), "diagrams", "enumerate", "--rank", "2",
         "--admissible", "--out", "t.jsonl"]
    )
    assert rc == 0
    lines = open(tmp_path / "t.jsonl").read().splitlines()
    assert all(json.loads(l)["tree"] for l in lines)

    rc = cli.main(
        ["--out-dir", str(tmp_path), "molecules", "build", "--couple", "3:2",
         "--dot", "m.dot"]
    )
    assert rc == 0
    assert "digraph" in open(tmp_path / "m.dot").read()


def test_cli_counting_sigma(tmp_path):
    spec = tmp_path / "s.cfg"
    spec.write_text("r = 2\nzetas = +-\nk0 = 20,12\nkstar = 8\nT1 = 60\nR = 8\n")
    rc = cli.main(
        ["--out-dir", str(tmp_path), "counting", "sigma", "--spec", str(spec),
         "--out", "c.csv"]
    )
    assert rc == 0
    rows = open(tmp_path / "c.csv").read().splitlines()
    assert rows[0] == "r,R,T1,beta,count"
    assert len(rows) == 2


def test_cli_verify_quick(tmp_path):
    rc = cli.main(["--out-dir", str(tmp_path), "verify", "--quick"])
    assert rc == 0
    text = open(tmp_path / "verify.txt").read()
    assert text.count("PASS") >= 25
    assert "FAIL" not in text
