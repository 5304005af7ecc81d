import numpy as np
import pytest

from fedoptlab.datagen import ConditionedLsqSpec, IsotropicLsqSpec, LogisticGaussSpec
from fedoptlab.errors import ConfigError, DegenerateProblemError
from fedoptlab.harness import (
    ExperimentConfig,
    run_conditioning_study,
    run_inexact_floor_experiment,
    run_logistic_experiment,
    run_nonconvergence_experiment,
)


def test_experiment_config_validation():
    ens = IsotropicLsqSpec(m=1, d=1, n=2)
    with pytest.raises(ConfigError):
        ExperimentConfig(ensemble=ens, eps_target=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(ensemble=ens, kappa_grid=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(ensemble=ens, kappa_grid=[0.5])
    with pytest.raises(ConfigError):
        ExperimentConfig(ensemble=ens, algorithms=[])


# ---------------------------------------------------------------------------
# nonconvergence experiment
# ---------------------------------------------------------------------------

def test_nonconvergence_floors_match_oracles(tmp_path):
    ens = IsotropicLsqSpec(m=3, d=5, n=20, sigma2=0.25, seed=70)
    traces, report = run_nonconvergence_experiment(
        ens, epochs_list=(1, 10), rounds=300, output_dir=str(tmp_path)
    )
    runs = report["runs"]
    assert runs["fedgd_e1"]["terminal_gap"] <= 1e-8
    assert runs["fedsplit"]["terminal_gap"] <= 1e-8
    for label in ("fedgd_e10", "fedprox"):
        assert runs[label]["predicted_floor"] > 0
        assert runs[label]["rel_floor_error"] <= 1e-4
    assert (tmp_path / "nonconvergence.json").is_file()
    assert (tmp_path / "nonconvergence.png").is_file()
    assert (tmp_path / "trace_fedgd_e10.csv").is_file()


def test_nonconvergence_rejects_logistic_ensemble():
    with pytest.raises(DegenerateProblemError):
        run_nonconvergence_experiment(LogisticGaussSpec(m=2, d=2, n=6, seed=0))


# ---------------------------------------------------------------------------
# conditioning study
# ---------------------------------------------------------------------------

def test_study_report_structure_and_monotonicity(tmp_path):
    ens = ConditionedLsqSpec(m=2, d=6, n=15, kappa=1.0, sigma2=1.0, seed=71)
    report = run_conditioning_study(ens, [4.0, 64.0], eps_target=1e-3,
                                    output_dir=str(tmp_path))
    assert [r.kappa for r in report.rows] == [4.0, 4.0, 64.0, 64.0]
    for name in ("fedgd", "fedsplit"):
        assert report.t_hit(name, 64.0) > report.t_hit(name, 4.0)
    assert report.t_hit("fedgd", 64.0) > report.t_hit("fedsplit", 64.0)
    doc = report.to_dict()
    assert set(doc) == {"eps", "rows", "slopes"}
    assert (tmp_path / "report.json").is_file()
    assert (tmp_path / "study.png").is_file()
    assert (tmp_path / "trace_fedsplit_kappa64.csv").is_file()


def test_study_censored_cells_excluded_from_fit():
    ens = ConditionedLsqSpec(m=2, d=5, n=12, kappa=1.0, sigma2=1.0, seed=72)
    report = run_conditioning_study(ens, [4.0, 10.0, 400.0], eps_target=1e-3,
                                    round_cap=40)
    censored = [r for r in report.rows if r.censored]
    assert any(r.algorithm == "fedgd" and r.kappa == 400.0 for r in censored)
    fit = report.fits["fedgd"]
    assert fit.n_points < 3


def test_study_threaded_matches_sequential():
    ens = ConditionedLsqSpec(m=2, d=5, n=12, kappa=1.0, sigma2=1.0, seed=73)
    seq = run_conditioning_study(ens, [4.0, 25.0], eps_target=1e-3, threads=1)
    par = run_conditioning_study(ens, [4.0, 25.0], eps_target=1e-3, threads=4)
    assert [r.t_hit for r in seq.rows] == [r.t_hit for r in par.rows]
    assert [r.final_gap for r in seq.rows] == [r.final_gap for r in par.rows]


def test_study_perfectly_conditioned_hits_quickly():
    ens = ConditionedLsqSpec(m=2, d=5, n=12, kappa=1.0, sigma2=1.0, seed=74)
    report = run_conditioning_study(ens, [1.0], eps_target=1e-3)
    for name in ("fedgd", "fedsplit"):
        assert report.t_hit(name, 1.0) <= 50


# ---------------------------------------------------------------------------
# inexact floor experiment
# ---------------------------------------------------------------------------

def test_floor_experiment_bounds_and_tracking(tmp_path):
    ens = ConditionedLsqSpec(m=3, d=8, n=30, kappa=10.0, sigma2=1e-6, seed=75)
    traces, report = run_inexact_floor_experiment(
        ens, epochs_list=(1, 5, 10), rounds=200, output_dir=str(tmp_path)
    )
    assert np.array_equal(traces["exact"].prox_residual, np.zeros(200))
    for e in (1, 5):
        run = report["runs"][f"grad_e{e}"]
        assert run["max_residual"] > 0
        assert run["floor_ok"]
    assert report["runs"]["grad_e10"]["tracks_exact"]
    assert (tmp_path / "floors.json").is_file()
    assert (tmp_path / "floors.png").is_file()


def test_floor_experiment_deterministic_outputs(tmp_path):
    ens = ConditionedLsqSpec(m=2, d=5, n=12, kappa=8.0, sigma2=1e-6, seed=76)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_inexact_floor_experiment(ens, epochs_list=(1, 5), rounds=80, output_dir=str(out1))
    run_inexact_floor_experiment(ens, epochs_list=(1, 5), rounds=80, output_dir=str(out2))
    for name in sorted(f.name for f in out1.iterdir()):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


# ---------------------------------------------------------------------------
# logistic experiment
# ---------------------------------------------------------------------------

def test_logistic_experiment_gaps_and_floor_ordering(tmp_path):
    ens = LogisticGaussSpec(m=3, d=5, n=50, seed=77)
    traces, report = run_logistic_experiment(
        ens, epochs_list=(1, 10), rounds=200, output_dir=str(tmp_path)
    )
    runs = report["runs"]
    assert runs["fedsplit_newton"]["terminal_gap"] <= 1e-8
    assert runs["fedsplit_grad_e10"]["terminal_gap"] <= 1e-6
    # coarse inner solves leave a strictly positive floor above the fine ones
    assert runs["fedsplit_grad_e1"]["min_gap"] > 0
    assert runs["fedsplit_grad_e1"]["min_gap"] > runs["fedsplit_grad_e10"]["terminal_gap"]
    assert (tmp_path / "logistic.json").is_file()
    assert (tmp_path / "logistic.png").is_file()


def test_logistic_experiment_rejects_quadratic_ensemble():
    with pytest.raises(DegenerateProblemError):
        run_logistic_experiment(IsotropicLsqSpec(m=2, d=2, n=6, seed=0))
