"""
Test bench CLI - gen-data, train, evaluate, parasitic and report on a tiny DC run,
plus slow runs on the default configs of each family
"""

import numpy as np
import orjson
import pandas as pd
import pytest

from config.experiment import DatasetSettings, ExperimentConfig
from config.settings import RUN_SLOW_TESTS
from dataset.generator import generate, split
from dataset.spec import DatasetSpec, default_grid
from dataset.storage import file_digest
from estimators.network import denoise_fidelity_audit, estimate_batch
from main import main
from nn.serialization import load_model
from quantum.channels import ChannelSpec
from quantum.process import analytic_chi
from utils import metrics
from utils.evaluation import evaluation_spec
from utils.run_directory import LOCK_NAME, RunDirectory
from utils.training_workflow import source_originals, with_originals

slow = pytest.mark.skipif(not RUN_SLOW_TESTS, reason="set QTOMO_RUN_SLOW=1 to run acceptance-scale checks")

K_FACTORS = [0.5, 1.0]


def tiny_config(out_dir, **changes) -> ExperimentConfig:
    data = {
        "family": "DC",
        "dataset": {"grid_step": 0.25, "instances_per_point": 4, "k_factors": K_FACTORS},
        "training": {"epochs": 2, "batch_size": 8},
        "architecture": {"encoder_channels": [2, 2, 2], "latent": 4},
        "evaluation": {"instances_per_point": 3, "bootstrap_resamples": 200},
        "parasitic": {"p_exp": [0.3, 1.0], "rescale_factors": [0.5, 1.0], "repetitions": 2},
        "output_dir": str(out_dir),
        "master_seed": 7,
    }
    data.update(changes)
    return ExperimentConfig.model_validate(data)


def write_config(tmp_path, out_dir, name="config.json", **changes):
    return str(tiny_config(out_dir, **changes).save(tmp_path / name))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One complete run through every command"""
    base = tmp_path_factory.mktemp("bench")
    run_dir = base / "run"
    config = write_config(base, run_dir)
    codes = {command: main([command, "--config", config]) for command in
             ("gen-data", "train", "evaluate", "parasitic", "report")}
    return RunDirectory(run_dir), codes, config


# ============================================================================
# Full pipeline
# ============================================================================

def test_every_command_succeeds(pipeline):
    _, codes, _ = pipeline
    assert codes == {"gen-data": 0, "train": 0, "evaluate": 0, "parasitic": 0, "report": 0}


def test_gen_data_writes_one_file_per_signal_level(pipeline):
    run, _, _ = pipeline
    manifest = orjson.loads(run.manifest_path.read_bytes())
    for k in K_FACTORS:
        path = run.dataset_path("DC", k)
        entry = manifest["files"][path.name]
        assert entry["sha256"] == file_digest(path)
        assert entry["records"] == 4 * 4 * 5


def test_gen_data_is_reproducible(pipeline, tmp_path):
    run, _, _ = pipeline
    config = write_config(tmp_path, tmp_path / "again", dataset={
        "grid_step": 0.25, "instances_per_point": 4, "k_factors": [0.5]})
    assert main(["gen-data", "--config", config]) == 0
    again = RunDirectory(tmp_path / "again")
    assert file_digest(again.dataset_path("DC", 0.5)) == file_digest(run.dataset_path("DC", 0.5))


def test_train_writes_models_and_loss_curves(pipeline):
    run, _, _ = pipeline
    summary = orjson.loads((run.training_dir / "DC_summary.json").read_bytes())
    for level in summary["levels"]:
        k = level["k_factor"]
        for role in ("autoencoder", "ann_ff", "ff"):
            assert run.model_path("DC", k, role).exists()
            losses = pd.read_csv(run.loss_path("DC", k, role))
            assert list(losses.columns) == ["epoch", "train_loss", "validation_loss"]
            assert len(losses) == level[role]["epochs"]
            assert np.isfinite(level[role]["final_validation_mse"])


def test_evaluation_records_are_paired(pipeline):
    run, _, _ = pipeline
    records = pd.read_csv(run.evaluation_dir / "DC_records.csv")
    assert len(records) == 3 * len(K_FACTORS) * 4 * 3
    seeds = {method: set(group["seed"]) for method, group in records.groupby("method")}
    assert seeds["MF"] == seeds["FF"] == seeds["ANN_FF"]
    assert records["residue_p"].between(0, 1).all()


def test_success_tables_recompute_from_records(pipeline):
    run, _, config_path = pipeline
    config = ExperimentConfig.load(config_path)
    records = pd.read_csv(run.evaluation_dir / "DC_records.csv")
    stored = pd.read_csv(run.evaluation_dir / "DC_success_points.csv")
    recomputed = metrics.success_percentages(records, "DC", config.evaluation.residue_cutoff)
    np.testing.assert_allclose(stored["success_p"], recomputed["success_p"], atol=1e-8)
    rates = pd.read_csv(run.evaluation_dir / "DC_success_rates.csv")
    assert set(rates["threshold"]) == {90.0, 95.0, 99.0}
    assert rates["rate_p"].between(0, 100).all()


def test_evaluation_summary_contents(pipeline):
    run, _, _ = pipeline
    summary = orjson.loads((run.evaluation_dir / "DC_summary.json").read_bytes())
    assert summary["methods"] == ["MF", "FF", "ANN_FF"]
    assert set(summary["denoise_audit"]) == {"k0.5", "k1"}
    assert summary["denoise_audit"]["k1"]["count"] == 12
    assert {(r["method_a"], r["method_b"]) for r in summary["paired_bootstrap"]} == {
        ("ANN_FF", "FF"), ("FF", "MF"), ("ANN_FF", "MF")}
    for name in ("mean_residues", "residue_histograms", "paired_bootstrap"):
        assert (run.evaluation_dir / f"DC_{name}.csv").exists()


def test_parasitic_rows(pipeline):
    run, _, _ = pipeline
    rows = pd.read_csv(run.parasitic_dir / "records.csv")
    assert len(rows) == 2 * 2 * 2
    np.testing.assert_allclose(rows[["p0", "p1", "p2", "p3"]].sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(rows["p1"] + rows["p2"] + rows["p3"], rows["true_p"], atol=1e-12)
    for method in ("mf", "ff", "ann_ff"):
        assert rows[f"est_p_{method}"].between(0, 1).all()
    table = pd.read_csv(run.parasitic_dir / "summary.csv")
    assert len(table) == 4 and (table["count"] == 2).all()


def test_report_is_complete_and_idempotent(pipeline):
    run, _, _ = pipeline
    report_path = run.report_dir / "report.json"
    first = report_path.read_bytes()
    report = orjson.loads(first)
    assert report["schema_version"] == 1
    assert report["master_seed"] == 7
    assert report["partial"] is False and report["missing"] == []
    assert report["methods_present"]["DC"] == {"MF": True, "FF": True, "ANN_FF": True}
    assert main(["report", str(run.root)]) == 0
    assert report_path.read_bytes() == first
    assert not (run.root / LOCK_NAME).exists()


# ============================================================================
# Training inputs
# ============================================================================

def test_augmented_training_set_gains_its_originals():
    spec = DatasetSpec.for_family("DC", 0.5, master_seed=3,
                                  settings=DatasetSettings(grid_step=0.5, instances_per_point=3))
    train_set, val_set = split(generate(spec), 0.8, seed=1)
    full = with_originals(train_set)
    originals = [r for r in full if r.view == -1]
    assert len(originals) == len(source_originals(train_set)) == 4
    assert len(full) == len(train_set) + 4
    assert {r.source_key for r in originals} == {r.source_key for r in train_set}
    for record in originals:
        assert record.noisy.is_valid()
    assert with_originals(val_set) is val_set


def test_parasitic_study_picks_levels_per_method(tmp_path):
    run_dir = tmp_path / "run"
    config = write_config(tmp_path, run_dir)
    assert main(["gen-data", "--config", config]) == 0
    assert main(["train", "--config", config, "--k", "0.5", "--method", "ff"]) == 0
    assert main(["train", "--config", config, "--k", "1", "--method", "ann-ff"]) == 0
    assert main(["parasitic", "--config", config, "--method", "all"]) == 0
    rows = pd.read_csv(run_dir / "parasitic" / "records.csv")
    assert (rows["model_k_ff"] == 0.5).all()
    assert (rows["model_k_ann_ff"] == 1.0).all()
    assert rows["est_p_ann_ff"].notna().all()


# ============================================================================
# Partial runs and errors
# ============================================================================

def test_report_flags_missing_sections(tmp_path):
    run_dir = tmp_path / "partial"
    config = write_config(tmp_path, run_dir, methods=["MF"], dataset={
        "grid_step": 0.5, "instances_per_point": 2, "k_factors": [1.0]})
    assert main(["gen-data", "--config", config]) == 0
    assert main(["report", str(run_dir)]) == 0
    report = orjson.loads((run_dir / "report" / "report.json").read_bytes())
    assert report["partial"] is True
    assert {"training:DC", "evaluation:DC", "parasitic"} <= set(report["missing"])
    assert report["methods_present"]["DC"]["ANN_FF"] is False


def test_missing_model_is_a_data_error(tmp_path):
    config = write_config(tmp_path, tmp_path / "run", dataset={
        "grid_step": 0.5, "instances_per_point": 2, "k_factors": [1.0]})
    assert main(["evaluate", "--config", config, "--method", "ff"]) == 3


def test_invalid_grid_step_rejected_before_io(tmp_path):
    config = tmp_path / "bad.json"
    config.write_text('{"dataset": {"grid_step": 0}, "output_dir": "%s"}' % (tmp_path / "run").as_posix())
    assert main(["gen-data", "--config", str(config)]) == 2
    assert not (tmp_path / "run").exists()


def test_missing_config_file(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "nope.json")]) == 2


def test_locked_run_directory(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    (run_dir / LOCK_NAME).write_text("1")
    config = write_config(tmp_path, run_dir)
    assert main(["gen-data", "--config", config]) == 2


def test_bad_cli_values():
    with pytest.raises(SystemExit) as exc_info:
        main(["gen-data", "--k", "fast"])
    assert exc_info.value.code == 2
    with pytest.raises(SystemExit):
        main(["evaluate", "--method", "svm"])


def test_cli_overrides(tmp_path):
    config = write_config(tmp_path, tmp_path / "ignored", dataset={
        "grid_step": 0.5, "instances_per_point": 2, "k_factors": [1.0]})
    out = tmp_path / "override"
    assert main(["gen-data", "--config", config, "--out", str(out), "--seed", "99", "--k", "0.5"]) == 0
    stored = ExperimentConfig.load(out / "config.json")
    assert stored.master_seed == 99 and stored.dataset.k_factors == [0.5]
    assert RunDirectory(out).dataset_path("DC", 0.5).exists()
    assert not (tmp_path / "ignored").exists()


# ============================================================================
# Statistics scaling
# ============================================================================

@slow
def test_mf_residue_shrinks_with_signal(tmp_path):
    config = tiny_config(tmp_path, evaluation={"instances_per_point": 50})
    means = []
    for k in (0.1, 1.0):
        dataset = generate(evaluation_spec(config, k))
        results = estimate_batch("MF", [r.noisy for r in dataset], "DC", truths=[r.params for r in dataset])
        means.append(np.mean([r.residues[0] for r in results]))
    assert means[1] < means[0]


# ============================================================================
# Acceptance-scale runs (defaults, one signal level)
# ============================================================================

def default_run(tmp_path_factory, family, **changes):
    base = tmp_path_factory.mktemp(f"{family.lower()}_defaults")
    data = {"family": family, "dataset": {"k_factors": [0.1]}, "output_dir": str(base / "run"), **changes}
    config = ExperimentConfig.model_validate(data).save(base / "config.json")
    for command in ("gen-data", "train", "evaluate"):
        assert main([command, "--config", str(config), "--method", "all"]) == 0
    return RunDirectory(base / "run")


@pytest.fixture(scope="module")
def dc_defaults(tmp_path_factory):
    return default_run(tmp_path_factory, "DC")


def bootstrap_row(run, family, method_a, method_b, k_factor, parameter):
    table = pd.read_csv(run.evaluation_dir / f"{family}_paired_bootstrap.csv")
    row = table[(table["method_a"] == method_a) & (table["method_b"] == method_b)
                & np.isclose(table["k_factor"], k_factor) & (table["parameter"] == parameter)]
    assert len(row) == 1
    return row.iloc[0]


@slow
def test_dc_training_converges_within_twenty_epochs(dc_defaults):
    summary = orjson.loads((dc_defaults.training_dir / "DC_summary.json").read_bytes())
    level = summary["levels"][0]
    for role in ("autoencoder", "ann_ff", "ff"):
        assert level[role]["epochs"] <= 20
        assert level[role]["final_validation_mse"] <= 1e-3


@slow
def test_dc_residues_order_ann_ff_ff_mf_at_low_signal(dc_defaults):
    overall = pd.read_csv(dc_defaults.evaluation_dir / "DC_overall_residues.csv").set_index("method")
    assert overall.loc["ANN_FF", "mean_residue_p"] <= overall.loc["FF", "mean_residue_p"]
    assert overall.loc["FF", "mean_residue_p"] <= overall.loc["MF", "mean_residue_p"]
    for method_a, method_b in (("ANN_FF", "FF"), ("FF", "MF")):
        row = bootstrap_row(dc_defaults, "DC", method_a, method_b, 0.1, "p")
        assert row["pairs"] == 300 * 20
        assert row["high"] < 0


@slow
def test_dc_ann_ff_on_noiseless_inputs(dc_defaults):
    ae = load_model(dc_defaults.model_path("DC", 0.1, "autoencoder"))
    head = load_model(dc_defaults.model_path("DC", 0.1, "ann_ff"))
    grid = default_grid("DC")
    chis = [analytic_chi(ChannelSpec.dc(p)) for (p,) in grid]
    results = estimate_batch("ANN_FF", chis, "DC", ae_model=ae, ff_model=head, truths=grid)
    assert np.mean([r.residues[0] for r in results]) <= 0.02


@slow
def test_dc_autoencoder_keeps_ideal_inputs(dc_defaults):
    ae = load_model(dc_defaults.model_path("DC", 0.1, "autoencoder"))
    ideals = [analytic_chi(ChannelSpec.dc(p)) for (p,) in default_grid("DC")]
    audit = denoise_fidelity_audit(ae, ideals, ideals)
    assert audit.fidelities.min() >= 1 - 1e-3


@slow
def test_gad_ann_ff_success_rates(tmp_path_factory):
    run = default_run(tmp_path_factory, "GAD", dataset={"grid_step": 0.2, "k_factors": [0.1, 1.0]})
    rates = pd.read_csv(run.evaluation_dir / "GAD_success_rates.csv")
    strict = rates[np.isclose(rates["threshold"], 99.0)].set_index(["method", "k_factor"])
    for name in ("eta", "gamma"):
        assert strict.loc[("ANN_FF", 0.1), f"rate_{name}"] > strict.loc[("FF", 0.1), f"rate_{name}"]
    assert strict.loc[("ANN_FF", 1.0), "rate_gamma"] >= 95.0


@slow
def test_cp_denoising_fidelity_and_success_gap(tmp_path_factory):
    run = default_run(tmp_path_factory, "CP")
    summary = orjson.loads((run.evaluation_dir / "CP_summary.json").read_bytes())
    audit = summary["denoise_audit"]["k0.1"]
    assert audit["count"] >= 500
    assert audit["denoised"]["q50"] >= 0.99
    success = pd.read_csv(run.evaluation_dir / "CP_cp_success.csv").set_index("method")
    assert success.loc["ANN_FF", "absolute_success"] - success.loc["FF", "absolute_success"] >= 30.0
