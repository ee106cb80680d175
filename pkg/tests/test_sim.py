import csv
import math

import numpy as np
import pytest

from dmimo_uplink import cli
from dmimo_uplink.rf_env import ScenarioConfig
from dmimo_uplink.selection import Method
from dmimo_uplink.sim import (
    CSV_COLUMNS,
    ExperimentSpec,
    SchemeKind,
    SweepVariable,
    aggregate,
    apply_sweep,
    emit_csv,
    figure_specs,
    load_experiment_spec,
    reproduce_figure,
    run_experiment,
    run_trial,
    run_trials,
    scheme_labels,
    trial_seed,
)


def small_spec(**kw):
    base = dict(
        scenario=ScenarioConfig(num_collaborators=4, rng_seed=7),
        sweep_values=(100.0, 400.0),
        trials=6,
        schemes={SchemeKind.DMIMO_CJT, SchemeKind.DMIMO_NCJT, SchemeKind.PHASE2_CJT,
                 SchemeKind.PHASE2_NCJT, SchemeKind.PHASE1_ONLY, SchemeKind.BASELINE},
        selection_methods={Method.ALL, Method.GREEDY, Method.EXHAUSTIVE},
        phase1_maxmin=True,
    )
    base.update(kw)
    return ExperimentSpec(**base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_spec_validation():
    with pytest.raises(ValueError):
        small_spec(trials=0)
    with pytest.raises(ValueError):
        small_spec(sweep_values=(400.0, 100.0))
    with pytest.raises(ValueError):
        small_spec(sweep_values=())
    with pytest.raises(ValueError):
        small_spec(scenario=ScenarioConfig(num_collaborators=0))
    with pytest.raises(ValueError):
        small_spec(sweep_values=(-5.0,))


def test_num_ues_sweep_counts_serving_ue():
    cfg = apply_sweep(ScenarioConfig(), SweepVariable.NUM_UES, 3)
    assert cfg.num_collaborators == 2
    with pytest.raises(ValueError):
        apply_sweep(ScenarioConfig(), SweepVariable.NUM_UES, 0)


def test_trial_seed_depends_on_all_indices():
    draws = {
        tuple(np.random.default_rng(trial_seed(1, s, t)).integers(0, 2**63, 2))
        for s in range(3) for t in range(3)
    }
    assert len(draws) == 9


def test_run_trial_relations():
    spec = small_spec()
    cfg = apply_sweep(spec.scenario, spec.sweep_variable, 200.0)
    out = run_trial(spec, cfg, trial_seed(3, 0, 0))
    assert set(out) == set(scheme_labels(spec)) | {"Baseline"}
    base = out["Baseline"][1]
    ex = out["DmimoCJT-Exhaustive"][1]
    assert ex >= out["DmimoCJT-Greedy"][1] - 1e-6
    assert ex >= out["DmimoCJT-All"][1] - 1e-6
    assert ex >= base - 1e-6
    assert out["DmimoNCJT-Exhaustive"][1] >= base - 1e-6
    assert out["Phase1Min"][0] <= out["Phase1Median"][0] <= out["Phase1Max"][0]
    assert out["Phase1MaxMin"][0] >= out["Phase1Min"][0] - 1e-12
    # CJT with everyone at full power is never below the serving UE alone
    assert out["Phase2CJT"][0] >= out["Baseline"][0] - 1e-9


def test_common_random_numbers_across_schemes():
    a = small_spec(schemes={SchemeKind.BASELINE})
    b = small_spec()
    ra, rb = run_trials(a), run_trials(b)
    for pa, pb in zip(ra, rb):
        assert [t["Baseline"] for t in pa] == [t["Baseline"] for t in pb]


def test_aggregate_matches_manual_means():
    spec = small_spec()
    raw = run_trials(spec)
    reports = aggregate(spec, raw)
    assert len(reports) == len(spec.sweep_values) * len(scheme_labels(spec))
    r = next(x for x in reports if x.scheme == "DmimoCJT-Exhaustive" and x.sweep_value == 400.0)
    bits = np.array([t["DmimoCJT-Exhaustive"][1] for t in raw[1]])
    base = np.array([t["Baseline"][1] for t in raw[1]])
    assert r.mean_bits == pytest.approx(bits.mean())
    assert r.relative_improvement == pytest.approx(bits.mean() / base.mean())
    assert r.confidence_halfwidth == pytest.approx(1.959963984540054 * bits.std(ddof=1) / math.sqrt(bits.size))
    assert r.trials == 6


def test_parallel_equals_serial():
    spec = small_spec(trials=4, selection_methods={Method.GREEDY}, phase1_maxmin=False)
    serial = run_experiment(spec, jobs=1)
    parallel = run_experiment(spec, jobs=2)
    assert serial == parallel


def test_emit_csv_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_emit_csv_rows_and_roundtrip(tmp_path):
    spec = small_spec(sweep_values=(300.0,), schemes={SchemeKind.BASELINE, SchemeKind.PHASE2_CJT})
    reports = run_experiment(spec)
    path = tmp_path / "out.csv"
    emit_csv(reports, path)
    rows = read_csv(path)
    assert rows[0] == list(CSV_COLUMNS)
    assert [r[2] for r in rows[1:]] == ["Phase2CJT", "Baseline"]
    assert float(rows[1][4]) == reports[0].mean_rate
    assert rows[1][0] == "BsDistance" and rows[1][3] == "full"


def test_emit_csv_unwritable_path(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        emit_csv([], tmp_path / "missing" / "x.csv")


def test_spec_file_loading(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(
        "sweep_variable: MdaaRadius\n"
        "sweep_values: [25, 75]\n"
        "trials: 3\n"
        "schemes: [Phase1Only]\n"
        "phase1_maxmin: true\n"
        "scenario:\n  bs_distance: 500\n  num_collaborators: 3\n"
        "solver:\n  max_iter: 50\n"
    )
    spec = load_experiment_spec(path)
    assert spec.sweep_variable is SweepVariable.MDAA_RADIUS
    assert spec.scenario.bs_distance == 500
    assert spec.solver.max_iter == 50
    labels = {r.scheme for r in run_experiment(spec)}
    assert labels == {"Phase1Min", "Phase1Median", "Phase1Max", "Phase1MaxMin"}
    bad = tmp_path / "bad.yaml"
    bad.write_text("trails: 3\n")
    with pytest.raises(ValueError, match="unknown"):
        load_experiment_spec(bad)


def test_figure_presets():
    specs = figure_specs("fig4", {"trials": 2})
    assert len(specs) == 10
    assert [s.scenario.num_collaborators for s, _ in specs] == list(range(10))
    assert all(s.trials == 2 and s.scenario.mdaa_radius == 50.0 for s, _ in specs)
    (fig8, _), = figure_specs("fig8")
    assert fig8.scenario.mdaa_radius == 200.0
    assert fig8.selection_methods == {Method.GREEDY, Method.ALL, Method.EXHAUSTIVE}
    assert len(figure_specs("fig9")) == 2
    assert len(figure_specs("fig9", {"power_mode": "normalized"})) == 1
    with pytest.raises(ValueError):
        figure_specs("fig2")
    with pytest.raises(ValueError):
        figure_specs("fig6", {"bogus": 1})


def test_reproduce_figure_labels(tmp_path):
    reports = reproduce_figure("fig5", {"trials": 2, "sweep_values": (300.0,)})
    labels = [r.scheme for r in reports]
    assert labels == ["Phase2CJT_U1", "Baseline"] + [f"Phase2CJT_U{u}" for u in range(2, 11)]
    assert all(r.power_mode.value == "normalized" for r in reports)


# --- CLI ----------------------------------------------------------------------

def test_cli_figure_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert cli.main(["figure", "fig6", "--seed", "42", "--trials", "2", "-o", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(read_csv(a)) == 1 + 2 * 10


def test_cli_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["figure", "fig6", "--seed", "1", "--trials", "2", "-o", str(a)])
    cli.main(["figure", "fig6", "--seed", "2", "--trials", "2", "-o", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_cli_run_spec(tmp_path):
    spec = tmp_path / "s.yaml"
    spec.write_text("sweep_values: [200]\ntrials: 2\nscenario:\n  num_collaborators: 2\n")
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--spec", str(spec), "--seed", "5", "--power-mode", "normalized", "-o", str(out)]) == 0
    rows = read_csv(out)
    assert [r[2] for r in rows[1:]] == ["DmimoCJT-Exhaustive", "Baseline"]
    assert rows[1][3] == "normalized"


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["run", "--spec", str(tmp_path / "nope.yaml")]) == 1
    assert "error" in capsys.readouterr().err
    assert cli.main(["figure", "fig6", "--seed", "-1"]) == 2
    assert cli.main(["figure", "fig6", "--trials", "0", "-o", str(tmp_path / "x.csv")]) == 1
    assert cli.main(["figure", "fig6", "--trials", "1", "-o", str(tmp_path / "no" / "x.csv")]) == 1
    with pytest.raises(SystemExit):
        cli.main(["figure", "fig99"])
