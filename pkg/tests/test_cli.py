from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from dickecav import __version__
from dickecav.cli import main


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, command, text="", *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / f"{command}.out"
    code = main([command, "--config", cfg, "--out", str(out), *extra])
    return code, out


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(lines))


def test_analytic_report(tmp_path):
    code, out = run(tmp_path, "analytic")
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["metadata"]["version"] == __version__
    assert doc["metadata"]["config"]["delta_R"] == "auto"
    r = doc["results"]
    assert r["p_success_closed"] == pytest.approx(0.3983, abs=1e-4)
    assert r["cumulative_success"][9]["p"] == pytest.approx(0.9938, abs=1e-4)
    assert len(r["cumulative_success"]) == 10
    assert r["excited_population_bound"] == pytest.approx(0.0187, abs=1e-4)
    lit = r["literature_comparison"]
    assert lit["quoted_p_success"] == 0.36
    assert lit["parameters_match_reference_set"]
    assert lit["difference"] == pytest.approx(0.0383, abs=1e-4)


def test_analytic_single_atom_and_lossless(tmp_path):
    code, out = run(tmp_path, "analytic", "n = 1\nkappa = 0")
    r = json.loads(out.read_text())["results"]
    assert code == 0
    assert r["delta_R_used"] == r["delta_R_optimal"]
    assert r["delta_R_used"] == json.loads(out.read_text())["metadata"]["config"]["delta_L"]
    assert r["p_success_closed"] == 0.5


def test_evolve_csv(tmp_path):
    code, out = run(tmp_path, "evolve", "samples = 301\nt_end = 2us")
    assert code == 0
    rows = read_csv(out)
    header = rows[0]
    assert header[0] == "t_seconds" and header[-1] == "norm_sq"
    assert header[1] == "re[S3.0.0|L]"
    data = np.array(rows[1:], dtype=float)
    assert data[0, 1] == 1 and data[0, 2] == 0 and data[0, -1] == 1
    assert np.all(np.diff(data[:, -1]) <= 1e-12)
    # R-photon population peaks near pi / Omega1
    lam1 = data[:, 3] ** 2 + data[:, 4] ** 2
    omega1 = 2 * np.sqrt(3) * (2 * np.pi * 16e6) / 20
    t_peak = data[np.argmax(lam1), 0]
    kappa = 2 * np.pi * 1.4e6
    t_model = 2 * np.arctan(omega1 / kappa) / omega1
    # the adiabatic peak is flat on top and the full model ripples at Delta_L
    assert abs(t_peak - t_model) < 0.1 * np.pi / omega1
    closed = np.exp(-kappa * data[:, 0]) * np.sin(omega1 * data[:, 0] / 2) ** 2
    assert np.max(np.abs(lam1 - closed)) < 0.05
    assert "%.17g" % data[1, 0] == rows[2][0]


@pytest.mark.parametrize("basis,extra,dim", [
    ("ladder", "m = 1", 3), ("single", "", 7), ("full", "n = 2", 5), ("eliminated", "", 2),
])
def test_evolve_bases(tmp_path, basis, extra, dim):
    code, out = run(tmp_path, "evolve", f"basis = {basis}\nsamples = 3\nT = 50ns\n{extra}")
    assert code == 0
    assert len(read_csv(out)[0]) == 2 + 2 * dim


def test_evolve_with_profile(tmp_path):
    code, out = run(tmp_path, "evolve", "basis = single\ncouplings = 1,1,0.9\nsamples = 3")
    assert code == 0
    code, _ = run(tmp_path, "evolve", "basis = reduced\ncouplings = 1,1,0.9")
    assert code == 2


def test_trajectories_and_events(tmp_path):
    events = tmp_path / "events.csv"
    code, out = run(tmp_path, "trajectories", "n_traj = 3000\nbins = 10", "--events", str(events))
    assert code == 0
    r = json.loads(out.read_text())["results"]
    assert sum(r["counts"].values()) == 3000
    assert len(r["histogram"]["counts"]) == 10
    assert sum(r["histogram"]["counts"]) == r["counts"]["D1_click"]
    rows = read_csv(events)
    assert rows[0] == ["trajectory", "terminal", "time_seconds"]
    assert len(rows) == 3001


def test_trajectories_seed_flag_overrides(tmp_path):
    _, a = run(tmp_path, "trajectories", "n_traj = 2000\nseed = 1", "--seed", "5")
    doc = json.loads(a.read_text())
    assert doc["results"]["seed"] == 5 and doc["metadata"]["seed"] == 5


def test_trajectories_byte_identical_across_jobs(tmp_path):
    text = "n_traj = 20000"
    _, a = run(tmp_path, "trajectories", text, "--jobs", "1")
    first = a.read_bytes()
    _, b = run(tmp_path, "trajectories", text, "--jobs", "4")
    assert first == b.read_bytes()


def test_sweep_surface(tmp_path):
    code, out = run(tmp_path, "sweep", "grid.g_over_kappa = 1, 200, 12\ngrid.n = 1,3,6")
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["g_over_kappa", "n", "p_closed"]
    data = np.array(rows[1:], dtype=float)
    for n in (1, 3, 6):
        block = data[data[:, 1] == n]
        assert np.all(np.diff(block[:, 2]) > 0)
        assert 0.49 <= block[-1, 2] <= 0.5
    code, out = run(tmp_path, "sweep", "grid.g_over_kappa = 11.428571428571429, 11.428571428571429, 1\n"
                                      "grid.n = 3")
    assert float(read_csv(out)[1][2]) == pytest.approx(0.3983, abs=1e-4)


def test_sweep_with_monte_carlo_column(tmp_path):
    code, out = run(tmp_path, "sweep", "grid.g_over_kappa = 5,20,2\ngrid.n = 2\ngrid.mc = 2000")
    rows = read_csv(out)
    assert rows[0][-1] == "p_mc"
    assert all(r[-1] for r in rows[1:])


def test_ladder_report(tmp_path):
    code, out = run(tmp_path, "ladder", "n = 3\nruns = 200")
    assert code == 0
    r = json.loads(out.read_text())["results"]
    assert r["target_m"] == 2 and r["completed"] == 200
    assert [s["step"] for s in r["steps"]] == [0, 1]
    assert all(s["trials"] >= 200 for s in r["steps"])
    assert r["oracle"]["final_fidelity_min"] == pytest.approx(1.0, abs=1e-9)


def test_ladder_two_atoms(tmp_path):
    code, out = run(tmp_path, "ladder", "n = 2\nruns = 50")
    assert code == 0
    r = json.loads(out.read_text())["results"]
    assert r["oracle"]["final_fidelity_min"] == pytest.approx(1.0, abs=1e-9)


def test_ladder_zero_budget_is_protocol_failure(tmp_path):
    code, out = run(tmp_path, "ladder", "max_trials = 0\nruns = 4")
    assert code == 4
    r = json.loads(out.read_text())["results"]
    assert r["completed"] == 0 and r["failures"] == {"budget": 4}


def test_config_errors_exit_two(tmp_path, capsys):
    code, _ = run(tmp_path, "analytic", "g = 2pi*16\nwhat = 1")
    assert code == 2
    assert "line 2" in capsys.readouterr().err
    code, _ = run(tmp_path, "ladder", "n = 1")
    assert code == 2
    assert main(["analytic", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_numerical_failure_exit_three(tmp_path, monkeypatch):
    from dickecav import cli
    from dickecav.dynamics import IntegrationError

    def boom(*_a, **_k):
        raise IntegrationError("step size underflow")

    monkeypatch.setattr(cli, "integrate_conditional", boom)
    code, _ = run(tmp_path, "evolve", "samples = 3")
    assert code == 3


def test_stdout_when_no_out(capsys):
    assert main(["analytic"]) == 0
    assert json.loads(capsys.readouterr().out)["metadata"]["command"] == "analytic"
