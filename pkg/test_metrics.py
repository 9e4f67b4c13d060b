"""
Test metrics - success rates, histograms, paired bootstrap and parasitic-channel helpers
"""

import math

import numpy as np
import pandas as pd
import pytest

from estimators.results import EstimatorKind
from utils import metrics
from utils.exceptions import ConfigError, DataError, MissingArtifactError
from utils.parasitic import jittered_probabilities, nearest_k, trained_levels
from utils.run_directory import RunDirectory


def dc_frame():
    """Two grid points, four records each, one method at one k"""
    return pd.DataFrame({
        "method": ["MF"] * 8,
        "k_factor": [0.1] * 8,
        "seed": list(range(8)),
        "grid_index": [0] * 4 + [1] * 4,
        "true_p": [0.2] * 4 + [0.6] * 4,
        "residue_p": [0.05, 0.2, 0.1, 0.0, 0.01, 0.02, 0.03, 0.04],
    })


def gad_frame():
    rows = []
    for grid_index, (eta, gamma) in enumerate([(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]):
        for i in range(10):
            rows.append({
                "method": "ANN_FF", "k_factor": 1.0, "seed": grid_index * 10 + i, "grid_index": grid_index,
                "true_eta": eta, "true_gamma": gamma,
                # point 0: all succeed; point 1: 9/10 eta, all gamma; point 2: nothing for eta
                "residue_eta": [0.0, 0.3 if i == 0 else 0.05, 0.5][grid_index],
                "residue_gamma": 0.02,
            })
    return pd.DataFrame(rows)


# ============================================================================
# Success rates
# ============================================================================

def test_success_percentage_per_grid_point():
    table = metrics.success_percentages(dc_frame(), "DC", 0.1)
    assert list(table["success_p"]) == [75.0, 100.0]
    assert list(table["true_p"]) == [0.2, 0.6]


def test_aggregate_rate_counts_grid_points_above_threshold():
    per_point = metrics.success_percentages(dc_frame(), "DC", 0.1)
    rates = metrics.aggregate_success(per_point, "DC", [50.0, 90.0, 99.0])
    assert list(rates["threshold"]) == [50.0, 90.0, 99.0]
    assert list(rates["rate_p"]) == [100.0, 50.0, 50.0]
    assert (rates["grid_points"] == 2).all()


def test_gad_aggregate_rates_per_parameter():
    per_point = metrics.success_percentages(gad_frame(), "GAD", 0.1)
    assert list(per_point["success_eta"]) == [100.0, 90.0, 0.0]
    rates = metrics.aggregate_success(per_point, "GAD", [89.0, 99.0]).set_index("threshold")
    assert rates.loc[89.0, "rate_eta"] == pytest.approx(200 / 3)
    assert rates.loc[99.0, "rate_eta"] == pytest.approx(100 / 3)
    assert rates.loc[99.0, "rate_gamma"] == 100.0


def test_percentages_stay_in_range():
    per_point = metrics.success_percentages(gad_frame(), "GAD", 0.1)
    for column in ("success_eta", "success_gamma"):
        assert per_point[column].between(0, 100).all()


def test_success_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        metrics.success_percentages(dc_frame(), "DC", 0.0)
    with pytest.raises(DataError):
        metrics.success_percentages(dc_frame().drop(columns=["residue_p"]), "DC", 0.1)


def test_cp_absolute_and_relative_success():
    frame = pd.DataFrame({
        "method": ["FF"] * 4,
        "k_factor": [0.1] * 4,
        "true_phi": [0.0, 1.0, 2.0, 3.0],
        "residue_phi": [0.01, 0.02, 0.5, 0.09],
        "relative_residue_phi": [math.nan, 0.02, 0.25, 0.03],
    })
    row = metrics.cp_success(frame, math.pi / 24, 0.03).iloc[0]
    assert row["records"] == 4 and row["relative_records"] == 3
    assert row["absolute_success"] == 75.0
    assert row["relative_success"] == pytest.approx(200 / 3)


# ============================================================================
# Residue tables and histograms
# ============================================================================

def test_mean_residues_per_grid_point():
    table = metrics.mean_residues(dc_frame(), "DC")
    assert list(table["count"]) == [4, 4]
    assert table["mean_residue_p"].iloc[1] == pytest.approx(0.025)
    assert table["std_residue_p"].iloc[1] == pytest.approx(np.std([0.01, 0.02, 0.03, 0.04], ddof=1))


def test_overall_residues():
    table = metrics.overall_residues(dc_frame(), "DC")
    assert len(table) == 1
    assert table["mean_residue_p"].iloc[0] == pytest.approx(np.mean(dc_frame()["residue_p"]))


def test_histogram_counts_every_record():
    hist = metrics.residue_histograms(dc_frame(), "DC", bins=20, upper=0.1)
    for grid_index in (0, 1):
        counts = hist[hist["grid_index"] == grid_index]
        assert counts["count"].sum() == 4
        assert len(counts) == 21
    overflow = hist[(hist["grid_index"] == 0) & np.isinf(hist["bin_high"])]
    assert overflow["count"].iloc[0] == 1


# ============================================================================
# Paired bootstrap
# ============================================================================

def test_bootstrap_detects_consistent_improvement():
    rng = np.random.default_rng(0)
    b = rng.uniform(0.1, 0.2, 200)
    stats = metrics.paired_bootstrap(b - 0.05, b, resamples=500, seed=1)
    assert stats["mean_difference"] == pytest.approx(-0.05)
    assert stats["high"] < 0 and stats["a_better"] == 1.0


def test_bootstrap_on_identical_samples():
    a = np.linspace(0, 1, 50)
    stats = metrics.paired_bootstrap(a, a.copy(), resamples=200, seed=0)
    assert stats["low"] == stats["high"] == 0.0
    assert stats["a_better"] == 0.0


def test_bootstrap_is_seeded():
    rng = np.random.default_rng(3)
    a, b = rng.random(40), rng.random(40)
    assert metrics.paired_bootstrap(a, b, 300, seed=5) == metrics.paired_bootstrap(a, b, 300, seed=5)


def test_bootstrap_needs_paired_samples():
    with pytest.raises(DataError):
        metrics.paired_bootstrap(np.zeros(3), np.zeros(4))
    with pytest.raises(DataError):
        metrics.paired_bootstrap(np.zeros(0), np.zeros(0))


def test_paired_comparisons_match_on_seed():
    ff = dc_frame().assign(method="FF")
    mf = dc_frame().assign(residue_p=dc_frame()["residue_p"] + 0.1).iloc[::-1]
    table = metrics.paired_comparisons(pd.concat([mf, ff]), "DC", resamples=200)
    assert list(zip(table["method_a"], table["method_b"])) == [("FF", "MF")]
    row = table.iloc[0]
    assert row["pairs"] == 8
    assert row["mean_difference"] == pytest.approx(-0.1)


# ============================================================================
# Parasitic channels
# ============================================================================

@pytest.mark.parametrize("p", [0.0, 0.09, 0.3, 0.64, 1.0])
def test_jittered_probabilities_sum_to_one(p):
    rng = np.random.default_rng(11)
    for _ in range(20):
        probs = jittered_probabilities(p, 0.1, rng)
        assert probs.min() >= 0
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert probs[1:].sum() == pytest.approx(p, abs=1e-12)


def test_zero_jitter_is_isotropic():
    probs = jittered_probabilities(0.3, 0.0, np.random.default_rng(0))
    np.testing.assert_allclose(probs, [0.7, 0.1, 0.1, 0.1], atol=1e-15)


def test_invalid_jitter_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        jittered_probabilities(0.3, -0.1, rng)
    with pytest.raises(ConfigError):
        jittered_probabilities(0.3, 1.0, rng)
    with pytest.raises(ConfigError):
        jittered_probabilities(1.2, 0.1, rng)


def test_nearest_signal_level_on_log_scale():
    levels = [0.1, 0.5, 1.0]
    assert nearest_k(0.025, levels) == 0.1
    assert nearest_k(0.25, levels) == 0.5
    assert nearest_k(0.75, levels) == 1.0
    assert nearest_k(1.0, levels) == 1.0
    with pytest.raises(MissingArtifactError):
        nearest_k(0.5, [])


def test_trained_levels_need_every_model_of_the_method(tmp_path):
    run = RunDirectory(tmp_path)
    for k, role in ((0.1, "ff"), (0.5, "ann_ff"), (1.0, "autoencoder"), (1.0, "ann_ff")):
        path = run.model_path("DC", k, role)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"")
    levels = [0.1, 0.5, 1.0]
    assert trained_levels(run, levels, EstimatorKind.FF) == [0.1]
    assert trained_levels(run, levels, EstimatorKind.ANN_FF) == [1.0]
