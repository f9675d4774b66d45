"""Smoke tests for the python extension module.

The built module directory and the CLI path arrive via environment variables
set by the test harness (DRIFTWATCH_MODULE_DIR, DRIFTWATCH_CLI).
"""
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

MODULE_DIR = os.environ.get("DRIFTWATCH_MODULE_DIR")
if MODULE_DIR:
    sys.path.insert(0, MODULE_DIR)

dw = pytest.importorskip("_driftwatch")


def test_scenario_names_and_shapes():
    names = dw.scenario_names()
    assert names[0] == "null"
    assert set("ABCDEFGH") <= set(names)

    sc = dw.generate_scenario("B", seed=7, n_days=12, rows_per_day=20)
    assert sc["values"].shape == (12 * 20, 10)
    assert sc["change_after_day"] == 11
    assert len(sc["day"]) == 12 * 20
    variables = json.loads(sc["variables_json"])
    assert len(variables) == 10

    again = dw.generate_scenario("B", seed=7, n_days=12, rows_per_day=20)
    np.testing.assert_array_equal(sc["values"], again["values"])


def test_fit_detects_a_planted_mean_step():
    sc = dw.generate_scenario("B", seed=11, n_days=30, rows_per_day=50)
    fit = dw.fit(sc["values"], sc["day"], sc["variables_json"],
                 n_sweeps=300, burn_in=60, seed=3)
    assert fit["changepoints"] == [15]
    assert fit["change_prob"].shape == (29,)
    assert fit["map_regimes"][0] == 1
    assert fit["map_regimes"][14] == 2

    score = dw.score_detection(fit["changepoints"], sc["change_after_day"], 30)
    assert score["detected"]
    assert score["fpr"] == 0.0


def test_missing_cells_round_trip_through_fit():
    sc = dw.generate_scenario("D", seed=5, n_days=8, rows_per_day=25)
    assert np.isnan(sc["values"][:, 4]).any()
    fit = dw.fit(sc["values"], sc["day"], sc["variables_json"],
                 n_sweeps=60, burn_in=20, q=2, seed=1)
    assert fit["indicators_added"] == 1
    processed = json.loads(fit["processed_variables_json"])
    assert processed[-1]["indicator_for"] == "x5"


def test_baseline_scan_and_input_validation():
    sc = dw.generate_scenario("B", seed=11, n_days=30, rows_per_day=50)
    scan = dw.hotelling_scan(sc["values"], sc["day"], sc["variables_json"])
    assert 15 in scan["flagged_days"]
    assert scan["stat"].shape == (30,)
    assert math.isnan(scan["stat"][0])

    with pytest.raises(RuntimeError, match="one entry per row"):
        dw.hotelling_scan(sc["values"], sc["day"][:-1], sc["variables_json"])
    with pytest.raises(RuntimeError, match="nondecreasing"):
        day = list(sc["day"])
        day[0], day[-1] = day[-1], day[0]
        dw.hotelling_scan(sc["values"], day, sc["variables_json"])


def test_hellinger_matches_the_pinned_unit_shift():
    h = dw.hellinger_gauss(np.zeros(1), np.eye(1), np.ones(1), np.eye(1))
    assert abs(h - math.sqrt(1.0 - math.exp(-0.125))) < 1e-12
    assert dw.hellinger_gauss(np.zeros(2), np.eye(2), np.zeros(2), np.eye(2)) == 0.0


def test_cli_binary_simulates_when_available():
    cli = os.environ.get("DRIFTWATCH_CLI")
    if not cli or not os.path.exists(cli):
        pytest.skip("CLI path not provided")
    out = subprocess.run([cli, "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip() == dw.__version__
