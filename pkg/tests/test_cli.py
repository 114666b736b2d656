import json
import subprocess
import sys

import numpy as np
import pytest

from fppath.cli import main
from fppath.dot import max_width_edge


def run(args):
    return main([str(a) for a in args])


def load(path):
    return json.loads(path.read_text())


def test_analyze_single_edge(fixtures, tmp_path):
    out = tmp_path / "s.json"
    assert run(["analyze", "--graph", fixtures / "single_edge.json", "--out", out]) == 0
    doc = load(out)
    assert doc["q"] == [0.0, 1.0] and doc["theta"] == [1.0, 1.0]
    assert doc["schema_version"] == 1
    assert doc["manifest"]["command"] == "analyze"
    assert "wall_clock_seconds" not in doc["manifest"]


def test_analyze_path_graph_golden(fixtures, tmp_path):
    out = tmp_path / "s.json"
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--out", out]) == 0
    doc = load(out)
    golden = json.loads((fixtures / "path_graph_golden.json").read_text())
    assert doc["nodes"] == golden["nodes"]
    for key in ("q", "theta", "f", "theta_bar_prime", "theta_tilde", "mu_r"):
        np.testing.assert_allclose(doc[key], golden[key], atol=1e-12, err_msg=key)
    got = {(e["from"], e["to"]): e["value"] for e in doc["J_tilde"]}
    want = {(e["from"], e["to"]): e["value"] for e in golden["J_tilde"]}
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)
    for k, v in golden["lengths"].items():
        assert doc["lengths"][k] == pytest.approx(v, abs=1e-12)
    assert max(doc["identities"].values()) < 1e-12
    assert doc["validation"]["ok"] is True


def test_analyze_dot_reactive(fixtures, tmp_path):
    out, dot = tmp_path / "s.json", tmp_path / "f.dot"
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--out", out,
                "--dot", "reactive", "--dot-out", dot]) == 0
    text = dot.read_text()
    assert text.startswith("digraph")
    assert "theta_tilde=" in text
    # 1->2 and 2->3 tie at 3/2; the tie goes to the first edge in lexicographic order
    assert max_width_edge(text) == ("1", "2")


def test_analyze_dot_defaults_next_to_out(fixtures, tmp_path):
    out = tmp_path / "s.json"
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--out", out,
                "--dot", "total"]) == 0
    assert (tmp_path / "s.dot").exists()
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--dot", "total"]) == 2


def test_analyze_refuses_stranded_graph(fixtures, capsys):
    assert run(["analyze", "--graph", fixtures / "stranded.json"]) == 2
    err = capsys.readouterr().err
    assert "sinks_outside_b" in err


def test_analyze_override_sets(fixtures, tmp_path):
    out = tmp_path / "s.json"
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--out", out,
                "--A", "1", "--B", "3,4"]) == 0
    doc = load(out)
    assert doc["sets"]["A"] == ["1"] and doc["sets"]["B"] == ["3", "4"]
    # B = {3} alone leaves the old target 4 as a sink outside B
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--A", "1", "--B", "3"]) == 2
    assert run(["analyze", "--graph", fixtures / "path_graph.json", "--A", "nope"]) == 2


def test_analyze_two_exits(fixtures, tmp_path):
    out = tmp_path / "s.json"
    assert run(["analyze", "--graph", fixtures / "two_exits_one_gate.json", "--out", out]) == 0
    np.testing.assert_allclose(load(out)["mu_r"], [0, 1, 0, 0, 0], atol=1e-10)
    np.testing.assert_allclose(load(out)["mu_r_last_exit"], [0, 1, 0, 0, 0], atol=1e-10)


def test_analyze_continuous_graph_has_times(fixtures, tmp_path):
    out = tmp_path / "s.json"
    assert run(["analyze", "--graph", fixtures / "exp_chain.json", "--out", out]) == 0
    doc = load(out)
    assert doc["model"]["origin"] == "embedded-from-continuous"
    t = doc["times"]
    assert t["total"] == pytest.approx(t["total_bar"] + t["total_tilde"])


def test_ergodic_cycle(fixtures, tmp_path):
    out = tmp_path / "e.json"
    assert run(["ergodic", "--graph", fixtures / "cycle.json", "--out", out,
                "--cross-check"]) == 0
    erg = load(out)["ergodic"]
    np.testing.assert_allclose(erg["m"], 0.2, atol=1e-14)
    assert erg["pipeline_deviation"] < 1e-8


def test_ergodic_birth_death_residual(fixtures, tmp_path):
    out = tmp_path / "e.json"
    assert run(["ergodic", "--graph", fixtures / "birth_death.json", "--out", out]) == 0
    assert load(out)["ergodic"]["Z_residual"] < 1e-10


def test_ergodic_periodic_needs_flag(fixtures, tmp_path):
    out = tmp_path / "e.json"
    assert run(["ergodic", "--graph", fixtures / "two_state.json", "--out", out]) == 2
    assert run(["ergodic", "--graph", fixtures / "two_state.json", "--out", out,
                "--allow-periodic"]) == 0
    erg = load(out)["ergodic"]
    assert erg["Z"] == pytest.approx(0.5) and erg["k_ab"] == pytest.approx(1.2)
    assert run(["ergodic", "--graph", fixtures / "path_graph.json"]) == 2


def test_estimate_counterexample(fixtures, tmp_path):
    out = tmp_path / "d.json"
    assert run(["estimate", "--trajectories", fixtures / "counterexample.jsonl",
                "--A", "0", "--B", "3", "--out", out]) == 0
    doc = load(out)
    assert doc["naive"]["q_data"][1] == 1.0
    assert doc["naive"]["q_model"][1] < 1.0
    assert doc["naive"]["tag"].startswith("biased")
    assert doc["counting"]["theta"][2] == 1.5
    np.testing.assert_allclose(doc["theta"], doc["counting"]["theta"], atol=1e-12)


def test_estimate_errors(fixtures, tmp_path):
    assert run(["estimate", "--trajectories", fixtures / "empty.jsonl",
                "--A", "0", "--B", "3"]) == 2
    assert run(["estimate", "--trajectories", fixtures / "counterexample.jsonl"]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"steps": ["0", "3"]}\n{"steps": ["3", "0"]}\n')
    assert run(["estimate", "--trajectories", bad, "--A", "0", "--B", "3"]) == 2
    assert run(["estimate", "--trajectories", tmp_path / "missing.jsonl",
                "--A", "0", "--B", "3"]) == 2


def test_simulate_is_byte_identical(fixtures, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["simulate", "--graph", fixtures / "path_graph.json", "--samples", "3000",
            "--seed", "5"]
    assert run(args + ["--out", a]) == 0
    assert run(args + ["--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load(a)["manifest"]["seed"] == 5


def test_simulate_path_graph_mean_length(fixtures, tmp_path):
    out = tmp_path / "m.json"
    assert run(["simulate", "--graph", fixtures / "path_graph.json", "--samples", "100000",
                "--seed", "1", "--out", out]) == 0
    tau = load(out)["empirical"]["scalars"]["tau"]
    assert abs(tau["value"] - 16.0) <= 3 * tau["stderr"]


def test_simulate_stationary_two_state(fixtures, tmp_path):
    out = tmp_path / "st.json"
    assert run(["simulate", "--graph", fixtures / "two_state.json", "--mode", "stationary",
                "--length", "100000", "--seed", "2", "--out", out]) == 0
    doc = load(out)
    # the two-state chain alternates, so Z is 1/2 up to one unfinished passage
    assert abs(doc["Z"]["value"] - 0.5) <= 3 * doc["Z"]["stderr"] + 1e-5
    assert abs(doc["k_ab"]["value"] - 1.2) <= 3 * doc["k_ab"]["stderr"]
    assert run(["simulate", "--graph", fixtures / "two_state.json", "--mode",
                "stationary"]) == 2


def test_simulate_rejection_failure(fixtures):
    assert run(["simulate", "--graph", fixtures / "path_graph.json", "--samples", "1000",
                "--max-steps", "3"]) == 3


def test_simulate_then_estimate_round_trip(fixtures, tmp_path):
    traj, out = tmp_path / "t.jsonl", tmp_path / "d.json"
    assert run(["simulate", "--graph", fixtures / "exp_chain.json", "--samples", "2000",
                "--seed", "3", "--trajectories-out", traj, "--out", tmp_path / "s.json"]) == 0
    assert run(["estimate", "--trajectories", traj, "--graph", fixtures / "exp_chain.json",
                "--out", out]) == 0
    doc = load(out)
    assert doc["estimated_model"]["trajectories"] == 2000
    assert doc["estimated_model"]["kappa"][0] > 0


def test_rank(fixtures, tmp_path):
    out = tmp_path / "r.json"
    assert run(["rank", "--graph", fixtures / "path_graph.json", "--top-k", "2",
                "--out", out]) == 0
    doc = load(out)
    assert [e["from"] + e["to"] for e in doc["edges"]["J_tilde"]] == ["12", "23"]
    assert [e["node"] for e in doc["nodes"]["theta"]] == ["1", "0"]


def test_timing_flag_and_stdout(fixtures, capsys):
    assert run(["analyze", "--graph", fixtures / "single_edge.json", "--timing"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert "wall_clock_seconds" in doc["manifest"]


def test_module_entry_point(fixtures):
    proc = subprocess.run([sys.executable, "-m", "fppath", "analyze", "--graph",
                           str(fixtures / "single_edge.json")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["q"] == [0.0, 1.0]
