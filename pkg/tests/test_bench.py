import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bec_qoc.bench.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main
from bec_qoc.bench.config import ConfigError, load, loads, parse_seeds, parse_values
from bec_qoc.bench.runner import configured_problem, initial_control, run
from bec_qoc.bench.stats import (EnsembleSummary, emit_plot_data, read_summary, robustness_scan,
                                 summarize, summarize_files)
from bec_qoc.optimizers import RunTrace

TINY = """\
[problem]
n_steps = 101
n_points = 64

[algorithm]
name = {name}
M = 4

[filter]
kind = {filter}

[run]
seeds = {seeds}
max_evals = 10
output_dir = {out}
"""


def tiny(tmp_path, name="group", filter="exponential", seeds="1", out="out"):
    path = tmp_path / f"{name}.ini"
    path.write_text(TINY.format(name=name, filter=filter, seeds=seeds, out=tmp_path / out))
    return path


def trace_of(values, start=1):
    t = RunTrace("x")
    for i, v in enumerate(values, start=start):
        t.observe(i, 0.5 * v, 1 - v)
    return t


def csv_rows(path, drop=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if drop is None:
        return rows
    k = rows[0].index(drop)
    return [r[:k] + r[k + 1:] for r in rows]


# -- config ---------------------------------------------------------------------------

def test_defaults_match_the_reference_problem():
    cfg = loads("")
    p = cfg.problem
    assert (p.T_ms, p.n_steps, p.gamma, p.beta_hbar_hz_um) == (1.09, 3501, 1e-6, 1830.0)
    assert (p.p2_hz, p.p4_hz, p.p6_hz, p.r0_um) == (310.0, 13.6, -0.0634, 0.172)
    assert cfg.run.max_evals == 500
    assert p.dt_ms == pytest.approx(1.09 / 3500)


def test_full_scale_mode():
    cfg = loads("[run]\nseeds = 1-10\n").full_scale()
    assert cfg.run.seeds == tuple(range(1, 101))
    assert cfg.run.max_evals == 2500


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as err:
        loads("[problem]\nT_ms = 1.0\nbeta = 3\n", "c.ini")
    assert err.value.line == 3
    assert "c.ini:3" in str(err.value)


@pytest.mark.parametrize("text, line", [
    ("[problem]\nT_ms = -1\n", 2),
    ("[algorithm]\nname = magic\n", 2),
    ("[run]\n\nseeds = 3-1\n", 3),
    ("[problem]\nn_points = 100\n", 2),
    ("[nonsense]\n", 1),
    ("[problem]\nbeta_scale = 2\n", 2),
    ("[algorithm]\nname = krotov\n[filter]\nkind = exponential\n", 4),
    ("[sweep]\naxis = beta-scale\nvalues = 1,nan\n", 2),
    ("[sweep]\naxis = wibble\nvalues = 1\n", 2),
])
def test_invalid_configs(text, line):
    with pytest.raises(ConfigError) as err:
        loads(text)
    assert err.value.line == line


def test_seed_and_value_parsing():
    assert parse_seeds("1-3, 7") == (1, 2, 3, 7)
    with pytest.raises(ValueError):
        parse_seeds("1,1")
    assert parse_values("0.5:1.5:0.25") == (0.5, 0.75, 1.0, 1.25, 1.5)
    assert parse_values("20, 40,60") == (20.0, 40.0, 60.0)


def test_sweep_cells():
    cfg = loads("[algorithm]\nname = group\n[sweep]\naxis = basis-size\nvalues = 20,60\n")
    cells = cfg.cells()
    assert [c[0] for c in cells] == ["group_basis-size=20", "group_basis-size=60"]
    assert cfg.for_cell(60.0).algorithm.M == 60
    cfg = loads("[sweep]\naxis = potential-scale\nvalues = 0.9\n")
    assert cfg.for_cell(0.9).problem.potential_scale == 0.9


def test_relative_filter_path_is_resolved(tmp_path):
    (tmp_path / "k.txt").write_text("0 20\n1 0\n")
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text("[filter]\nkind = file\npath = k.txt\n")
    assert Path(load(cfg_path).filter.path) == tmp_path / "k.txt"


def test_configured_problem_has_fresh_counter():
    cfg = loads("[problem]\nn_steps = 101\nn_points = 64\n")
    a = configured_problem(cfg)
    a.forward(a.zero_control())
    assert configured_problem(cfg).counter.count == 0


def test_initial_controls_are_shared_across_algorithms():
    base = "[problem]\nn_steps = 101\nn_points = 64\n[algorithm]\nname = {}\n"
    a = configured_problem(loads(base.format("grape")))
    b = configured_problem(loads(base.format("nm-crab")))
    np.testing.assert_array_equal(initial_control(a, 3), initial_control(b, 3))


# -- runs -------------------------------------------------------------------------------

def test_tiny_run_smoke(tmp_path):
    cfg = load(tiny(tmp_path))
    out, results = run(cfg)
    assert [r.error for r in results] == [""]
    rows = csv_rows(out / "group" / "seed_1.csv")
    assert rows[0] == ["eval_count", "cost", "infidelity", "fidelity", "wall_ms"]
    assert 1 <= len(rows) - 1 <= 10
    assert max(int(r[0]) for r in rows[1:]) <= 10
    control = np.loadtxt(out / "group" / "seed_1_control.txt")
    assert control.shape == (101, 2)
    assert control[0, 1] == 0.0 and control[-1, 1] == 0.0
    assert (out / "group" / "summary.csv").exists()
    assert csv_rows(out / "cells.csv")[1][:3] == ["group", "1", "max_evals"]


@pytest.mark.parametrize("name, filt", [("grape", "exponential"), ("nm-crab", "none"),
                                         ("dgroup", "exponential"), ("krotov", "none")])
def test_every_algorithm_runs_from_a_config(tmp_path, name, filt):
    assert main(["run", str(tiny(tmp_path, name, filt))]) == EXIT_OK
    assert (tmp_path / "out" / name / "seed_1.csv").exists()


def test_runs_are_byte_identical_except_wall_time(tmp_path):
    path = tiny(tmp_path, "grape", seeds="1,2")
    cfg_a = load(path).with_output(str(tmp_path / "a"))
    cfg_b = load(path).with_output(str(tmp_path / "b"))
    run(cfg_a)
    run(cfg_b, workers=2)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 6
    for rel in files:
        a, b = tmp_path / "a" / rel, tmp_path / "b" / rel
        if rel.name.startswith("seed_") and rel.suffix == ".csv":
            assert csv_rows(a, drop="wall_ms") == csv_rows(b, drop="wall_ms")
        else:
            assert a.read_bytes() == b.read_bytes(), rel


def test_failed_cell_does_not_stop_others(tmp_path, monkeypatch):
    from bec_qoc.bench import runner

    real = runner.optimize

    def flaky(problem, u, alg, max_evals, seed):
        if seed == 2:
            raise RuntimeError("boom")
        return real(problem, u, alg, max_evals, seed)

    monkeypatch.setattr(runner, "optimize", flaky)
    out, results = run(load(tiny(tmp_path, seeds="1,2,3")))
    assert [r.trace is None for r in results] == [False, True, False]
    rows = csv_rows(out / "cells.csv")
    assert rows[2][2] == "failed" and "boom" in rows[2][-1]
    assert not (out / "group" / "seed_2.csv").exists()


def test_budget_accounting_in_traces(tmp_path):
    text = tiny(tmp_path).read_text().replace("M = 4", "M = 3\nbackend = goat")
    path = tmp_path / "goat.ini"
    path.write_text(text)
    out, _ = run(load(path))
    counts = [int(r[0]) for r in csv_rows(out / "group" / "seed_1.csv")[1:]]
    assert max(counts) <= 10 + 1 + 3


# -- statistics -------------------------------------------------------------------------------

def test_quartile_convention():
    s = summarize([trace_of([v]) for v in (1.0, 2.0, 3.0, 4.0, 5.0)])
    assert (s.median[0], s.q25[0], s.q75[0]) == (3.0, 2.0, 4.0)


def test_single_trace_summary():
    t = trace_of([0.9, 0.5, 0.7, 0.2])
    s = summarize([t])
    np.testing.assert_array_equal(s.median, t.infidelities)
    np.testing.assert_array_equal(s.q25, s.q75)


def test_alignment_carries_best_so_far_forward():
    a = trace_of([0.9, 0.4])
    b = RunTrace("y")
    b.observe(1, 0.4, 0.2)
    b.observe(5, 0.1, 0.8)
    s = summarize([a, b])
    np.testing.assert_array_equal(s.eval_counts, [1, 2, 5])
    np.testing.assert_allclose(s.median, [(0.9 + 0.8) / 2, (0.4 + 0.8) / 2, (0.4 + 0.2) / 2])


@settings(max_examples=25)
@given(st.lists(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6), min_size=1, max_size=6),
       st.randoms())
def test_summary_is_permutation_invariant_and_ordered(values, rnd):
    traces = [trace_of(v) for v in values]
    shuffled = traces[:]
    rnd.shuffle(shuffled)
    a, b = summarize(traces), summarize(shuffled)
    for x, y in zip((a.median, a.q25, a.q75), (b.median, b.q25, b.q75)):
        np.testing.assert_array_equal(x, y)
    assert np.all(a.q25 <= a.median) and np.all(a.median <= a.q75)


def test_empty_summary_is_an_error():
    with pytest.raises(ValueError):
        summarize([])


def test_summarize_files(tmp_path):
    for i, v in enumerate((0.3, 0.1, 0.2)):
        trace_of([v]).write_csv(tmp_path / f"seed_{i}.csv")
    s = summarize_files(sorted(tmp_path.glob("seed_*.csv")))
    assert s.median[0] == pytest.approx(0.2)


def test_plot_data_round_trip(tmp_path):
    s = summarize([trace_of([0.9, 0.5, 0.1]), trace_of([0.7, 0.3, 0.2])])
    csv_path, svg_path = emit_plot_data(s, tmp_path / "fig")
    back = read_summary(csv_path)
    for a, b in zip((s.eval_counts, s.median, s.q25, s.q75), (back.eval_counts, back.median, back.q25, back.q75)):
        np.testing.assert_array_equal(a, b)
    svg = svg_path.read_text()
    assert svg.startswith("<svg") and 'class="band"' in svg


def test_plot_single_point(tmp_path):
    s = EnsembleSummary(np.array([1]), np.array([0.5]), np.array([0.5]), np.array([0.5]), 1)
    csv_path, svg_path = emit_plot_data(s, tmp_path / "one.csv")
    assert len(csv_rows(csv_path)) == 2
    assert 'class="band"' not in svg_path.read_text()


# -- robustness -------------------------------------------------------------------------------------

def test_robustness_identity_scaling_reproduces_infidelity():
    cfg = loads("[problem]\nn_steps = 101\nn_points = 64\n[filter]\nkind = exponential\n")
    problem = configured_problem(cfg)
    u = initial_control(problem, 2, amplitude=0.2)
    ref = problem.forward(u).cost.infidelity
    for axis in ("beta-scale", "potential-scale"):
        table = robustness_scan(u, axis, [0.9, 1.0, 1.1], cfg)
        assert table.status == ("ok", "ok", "ok")
        assert abs(table.infidelity[1] - ref) <= 1e-12
        assert np.all(np.abs(np.diff(table.infidelity)) < 0.5)


def test_robustness_rejects_other_axes():
    with pytest.raises(ValueError):
        robustness_scan(np.zeros(3), "basis-size", [1.0], loads(""))


# -- command line -----------------------------------------------------------------------------

def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem]\nT_ms = 1.09\nwidth_um = 3\n")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "bad.ini:3" in capsys.readouterr().err


def test_cli_missing_config_and_bad_args(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == EXIT_CONFIG


def test_cli_summarize_and_plot(tmp_path, capsys):
    for i, v in enumerate((0.3, 0.1, 0.2)):
        trace_of([v, v / 2]).write_csv(tmp_path / f"seed_{i}.csv")
    assert main(["summarize", str(tmp_path / "seed_*.csv"), "--out", str(tmp_path / "s.csv")]) == EXIT_OK
    assert main(["plot", str(tmp_path / "s.csv"), str(tmp_path / "plot")]) == EXIT_OK
    assert (tmp_path / "plot.svg").exists()
    assert main(["summarize", str(tmp_path / "none_*.csv")]) == EXIT_FAILURE


def test_cli_robustness(tmp_path, capsys):
    path = tiny(tmp_path)
    assert main(["run", str(path)]) == EXIT_OK
    sol = tmp_path / "out" / "group" / "seed_1_control.txt"
    rc = main(["robustness", str(sol), "beta-scale", "0.5:1.5:0.5", str(path), "--out", str(tmp_path / "rob")])
    assert rc == EXIT_OK
    rows = csv_rows(tmp_path / "rob" / "robustness.csv")
    assert [r[0] for r in rows] == ["beta-scale", "0.5", "1.0", "1.5"]
    assert (tmp_path / "rob" / "robustness_plot.svg").exists()
    assert main(["plot", str(tmp_path / "rob" / "robustness.csv"), str(tmp_path / "rp")]) == EXIT_OK


def test_cli_robustness_length_mismatch(tmp_path):
    path = tiny(tmp_path)
    sol = tmp_path / "sol.txt"
    np.savetxt(sol, np.zeros((50, 2)))
    assert main(["robustness", str(sol), "beta-scale", "1", str(path)]) == EXIT_CONFIG
