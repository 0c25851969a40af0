import subprocess
import sys

import numpy as np
import pytest

from imexstab import cli
from imexstab.cli import ConfigError, load_config, main, scalar_report


def summary(path):
    out = {}
    for line in (path / "summary.txt").read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


def test_defaults_and_overrides():
    cfg = load_config(None, ["pnp.eps=0.12", "mesh.N_CELLS=30"])
    assert cfg["pnp"]["eps"] == 0.12 and cfg["mesh"]["n_cells"] == 30
    assert cfg["adaptive"]["tol"] == 1e-6


def test_ini_file_and_override_precedence(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nmodel = logistic\n[logistic]\nr = 2.0\n")
    cfg = load_config(str(p), ["logistic.r=3"])
    assert cfg.model == "logistic" and cfg["logistic"]["r"] == 3.0


@pytest.mark.parametrize("bad", [["pnp.epsilon=0.1"], ["nosuch.key=1"], ["pnp.eps=abc"], ["eps=0.1"],
                                 ["pnp.eps=-1"], ["mesh.kind=hexagonal"]])
def test_bad_config_rejected(bad):
    with pytest.raises(ConfigError):
        load_config(None, bad)


def test_unknown_key_exit_code(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[pnp]\nepsilon = 0.1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "epsilon" in capsys.readouterr().err


def test_digest_tracks_content():
    a, b = load_config(None, ["pnp.eps=0.1"]), load_config(None, ["pnp.eps=0.10"])
    assert a.digest() == b.digest()
    assert a.digest() != load_config(None, ["pnp.eps=0.11"]).digest()


LOGISTIC = ["--set", "run.model=logistic", "--set", "adaptive.dt_max=1.1428571428571428"]


def test_logistic_simulate_plateau_and_determinism(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["simulate", *LOGISTIC, "--out", str(o)]) == 0
    s = summary(outs[0])
    assert float(s["dt_infinity"]) == pytest.approx(4 / 7, rel=0.02)
    for name in ("steps.csv", "states.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    tail = (outs[0] / "steps.csv").read_text().splitlines()
    h = load_config(None, ["run.model=logistic", "adaptive.dt_max=1.1428571428571428"]).digest()
    assert f"# config_hash = {h}" in tail and "# command = simulate" in tail


def test_numeric_failure_exit_code(tmp_path, capsys):
    args = ["simulate", "--set", "run.model=logistic", "--set", "logistic.r=4",
            "--set", "adaptive.dt_min=1", "--set", "adaptive.dt_init=1", "--set", "adaptive.dt_max=1",
            "--set", "adaptive.t_end=500", "--out", str(tmp_path)]
    with np.errstate(all="ignore"):
        assert main(args) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_zero_dynamics_climb_to_dt_max(tmp_path):
    args = ["simulate", "--set", "run.model=split_diffusion", "--set", "split_diffusion.D1=0",
            "--set", "split_diffusion.D2=0", "--set", "adaptive.t_end=400", "--out", str(tmp_path)]
    assert main(args) == 0
    assert summary(tmp_path)["dt_infinity_status"] == "hit dt_max"


def test_stability_logistic_and_no_threshold(tmp_path):
    assert main(["stability", "--set", "run.model=logistic", "--out", str(tmp_path / "a")]) == 0
    s = summary(tmp_path / "a")
    assert float(s["dt_star"]) == pytest.approx(4 / 7, rel=1e-6)
    assert (tmp_path / "a" / "radius_samples.csv").exists()
    assert main(["stability", "--set", "run.model=logistic", "--set", "stability.dt_hi=0.1",
                 "--out", str(tmp_path / "b")]) == 0
    assert summary(tmp_path / "b")["crossing"] == "no_threshold_found"


def test_steady_pnp_small_mesh(tmp_path):
    assert main(["steady", "--set", "mesh.n_cells=30", "--set", "pnp.eps=0.1", "--out", str(tmp_path)]) == 0
    s = summary(tmp_path)
    assert float(s["steady_residual"]) < 1e-8
    assert float(s["mass_c_minus"]) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("lam,alpha,case,verdict", [(-3.0, 1.0, "1", "unconditional"),
                                                   (-3.0, -1.0, "3", "unconditional"),
                                                   (1.0, -2.0, "5", "conditional")])
def test_scalar_report_cases(lam, alpha, case, verdict):
    s = dict(l.split(" = ", 1) for l in scalar_report(lam, alpha, [0.1]).splitlines() if " = " in l)
    assert s["case"] == case and s["verdict"].startswith(verdict)
    if verdict == "conditional":
        assert float(s["dt_star"]) == pytest.approx(4 / (lam - 3 * alpha))


def test_scalar_command_writes_csv(tmp_path, capsys):
    assert main(["scalar", "--set", "scalar.lam=1", "--set", "scalar.alpha=-2", "--out", str(tmp_path)]) == 0
    assert "case = 5" in capsys.readouterr().out
    rows = [l for l in (tmp_path / "scalar.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("dt,") and len(rows) > 5


def test_richardson_sweep_command(tmp_path):
    args = ["sweep", "--set", "run.model=split_diffusion", "--set", "sweep.kind=richardson",
            "--set", "mesh.n_cells=10", "--set", "sweep.n_d2=4", "--set", "adaptive.t_end=2000",
            "--out", str(tmp_path)]
    assert main(args) == 0
    text = (tmp_path / "features.txt").read_text()
    assert "slope = " in text and "neutral_D2_over_D1 = " in text


def test_sweep_kind_model_mismatch(tmp_path):
    assert main(["sweep", "--set", "run.model=logistic", "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "imexstab", "scalar", "--set", "scalar.alpha=1",
                        "--set", "scalar.lam=-3"], capture_output=True, text=True)
    assert r.returncode == 0 and "case = 1" in r.stdout
