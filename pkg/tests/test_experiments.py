import json

import pytest

from kinlim.config import ExperimentConfig
from kinlim.errors import ConfigurationError
from kinlim.experiments import run_experiment


def test_series_check_driver(tmp_path):
    cfg = ExperimentConfig(
        kind="series-check",
        seed=7,
        law_type="two-beam",
        beta=4.0,
        beam_speed=1.0,
        grid_m=13,
        grid_vmax=4.0,
        samples=150_000,
        sphere_nodes=5,
        time_horizon=0.3,
        plots=True,
    )
    summary = run_experiment(cfg, out_dir=tmp_path, quiet=True)
    assert (tmp_path / "series_check.csv").exists()
    assert (tmp_path / "fig_series_alpha.png").exists()
    assert summary["checks"]["prefactor_to_one"]["pass"]
    assert summary["checks"]["series_matches_quadrature"]["pass"]


def test_series_check_rejects_bad_grid(tmp_path):
    cfg = ExperimentConfig(kind="series-check", grid_m=15)
    with pytest.raises(ConfigurationError):
        run_experiment(cfg, out_dir=tmp_path, quiet=True)


def test_grazing_scan_driver_small(tmp_path):
    cfg = ExperimentConfig(
        kind="grazing-scan",
        seed=11,
        law_type="two-beam",
        beta=4.0,
        beam_speed=1.0,
        beam_axis=(0.8, 0.6, 0.0),
        amplitude=3.0,
        epsilon_list=(0.1, 0.05),
        samples=1200,
        sphere_nodes=4,
        plots=True,
    )
    summary = run_experiment(cfg, out_dir=tmp_path, quiet=True)
    assert (tmp_path / "grazing_scan.csv").exists()
    assert (tmp_path / "fig_grazing_vx2.png").exists()
    assert (tmp_path / "fig_grazing_vxvy.png").exists()
    body = json.loads((tmp_path / "summary.json").read_text())
    assert "grazing_monotone_v_x^2" in body["checks"]


def test_wc_limit_driver_small(tmp_path):
    # reduced-size run of the weak-coupling consistency driver
    cfg = ExperimentConfig(
        kind="wc-limit",
        seed=13,
        replicas=6,
        epsilon=0.1,
        n_particles=1000,
        law_type="two-beam",
        beta=4.0,
        beam_speed=1.0,
        amplitude=3.0,
        grid_m=21,
        grid_vmax=3.2,
        bins=5,
        hist_vmax=2.6,
        time_horizon=0.2,
        plots=False,
    )
    summary = run_experiment(cfg, out_dir=tmp_path, quiet=True)
    assert (tmp_path / "wc_limit.csv").exists()
    check = summary["checks"]["superlinear_ratio"]
    assert "noise_floor" in check and "value" in check


def test_relax_driver_reports_floor(tmp_path):
    cfg = ExperimentConfig(
        kind="relax",
        seed=3,
        law_type="two-beam",
        beta=4.0,
        beam_speed=1.0,
        n_particles=20_000,
        duration_mft=2.0,
        bins=8,
        hist_vmax=3.0,
        plots=False,
    )
    summary = run_experiment(cfg, out_dir=tmp_path, quiet=True)
    assert "noise_floor" in summary["checks"]["terminal_maxwellian_l1"]
