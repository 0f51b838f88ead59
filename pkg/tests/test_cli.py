import math
import subprocess
import sys

import pytest

from klucrl.cli import main, read_config_file
from klucrl.harness import read_metadata, read_regret_csv


def vec(tmp_path, name, values):
    path = tmp_path / name
    path.write_text(" ".join(map(str, values)) + "\n")
    return str(path)


def parse(out):
    return dict(line.split(": ", 1) for line in out.strip().splitlines())


def test_solve_kl_point_mass(tmp_path, capsys):
    p, V = vec(tmp_path, "p", [1, 0]), vec(tmp_path, "V", [0, 1])
    assert main(["solve", "--p", p, "--V", V, "--epsilon", "0.1"]) == 0
    got = parse(capsys.readouterr().out)
    q = list(map(float, got["q"].split()))
    assert q[0] == pytest.approx(math.exp(-0.1), abs=1e-10)
    assert got["branch"] == "interior-best-state"
    assert float(got["r"]) == pytest.approx(1 - math.exp(-0.1))


def test_solve_kl_worked_example(tmp_path, capsys):
    p, V = vec(tmp_path, "p", [0.3, 0.7, 0]), vec(tmp_path, "V", [1, 2, 3])
    main(["solve", "--p", p, "--V", V, "--epsilon", "0.1", "--metric", "kl"])
    q = list(map(float, parse(capsys.readouterr().out)["q"].split()))
    assert q == pytest.approx([0.16710, 0.77978, 0.05312], abs=1e-4)


def test_solve_l1(tmp_path, capsys):
    p, V = vec(tmp_path, "p", [0.3, 0.7, 0]), vec(tmp_path, "V", [1, 2, 3])
    main(["solve", "--p", p, "--V", V, "--epsilon", "0.2", "--metric", "l1"])
    got = parse(capsys.readouterr().out)
    assert list(map(float, got["q"].split())) == pytest.approx([0.2, 0.7, 0.1])
    assert got["nu"] == "none"


def test_solve_shape_mismatch(tmp_path):
    with pytest.raises(SystemExit):
        main(["solve", "--p", vec(tmp_path, "p", [1]), "--V", vec(tmp_path, "V", [0, 1]), "--epsilon", "0.1"])


def test_run_flags(tmp_path, capsys):
    out = tmp_path / "rs"
    main(["run", "--env", "riverswim", "--horizon", "400", "--reps", "2", "--seed", "3", "--out", str(out)])
    text = capsys.readouterr().out
    assert "sign test" in text and "klucrl: mean final regret" in text
    rows = read_regret_csv(out / "regret.csv")
    assert {r["algorithm"] for r in rows} == {"klucrl", "ucrl2"}
    assert read_metadata(out / "metadata.txt")["seed"] == "3"


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# comment\nenv = sixarms\nalgo=klucrl\nhorizon=300\nreps=1\nseed=4\nreward_mode=bern\n")
    parsed = read_config_file(cfg)
    assert parsed["reward-mode"] == "bern" and parsed["horizon"] == 300
    out = tmp_path / "o"
    main(["run", "--config", str(cfg), "--seed", "9", "--out", str(out)])
    meta = read_metadata(out / "metadata.txt")
    assert meta["seed"] == "9" and meta["algorithms"] == "klucrl"
    assert meta["env.env"] == "sixarms" and meta["env.reward_mode"] == "bernoulli"


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("horizon 100\n")
    with pytest.raises(SystemExit, match="bad.cfg:1"):
        read_config_file(bad)
    bad.write_text("colour=red\n")
    with pytest.raises(SystemExit, match="unknown key"):
        read_config_file(bad)


def test_env_var_output(tmp_path, monkeypatch):
    monkeypatch.setenv("KLUCRL_OUTPUT_DIR", str(tmp_path / "env-out"))
    main(["run", "--env", "sparse", "--env-seed", "1", "--horizon", "200", "--reps", "1", "--algo", "ucrl2"])
    assert (tmp_path / "env-out" / "sparse" / "regret.csv").exists()


def test_plot_and_sweep(tmp_path, capsys):
    out = tmp_path / "rs"
    main(["run", "--horizon", "300", "--reps", "2", "--out", str(out)])
    main(["plot", "--in", str(out / "regret.csv"), "--bounds"])
    assert (out / "regret.gp").exists() and (out / "bound.dat").exists()
    main(["sweep-demo", "--out", str(tmp_path / "sw"), "--points", "20"])
    lines = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 21


def test_console_entry_point(tmp_path):
    p, V = vec(tmp_path, "p", [0.5, 0.5]), vec(tmp_path, "V", [0, 1])
    res = subprocess.run(
        [sys.executable, "-m", "klucrl.cli", "solve", "--p", p, "--V", V, "--epsilon", "0.01"],
        capture_output=True, text=True, check=True,
    )
    assert res.stdout.startswith("q: ") and "branch: newton-root" in res.stdout
