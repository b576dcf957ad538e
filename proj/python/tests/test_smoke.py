from pathlib import Path

import numpy as np
import pytest

import carbonmfg as cm

ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(scope="module")
def short():
    params = cm.baseline_producer_params(20.0 / 730.0)
    return params, cm.TimeGrid(2.0, 73)


def test_riccati_shape_symmetry_and_terminal(short):
    params, grid = short
    eta = cm.riccati(params, cm.RegulatorPolicy(50.0, 1000.0), 0.0, grid)
    assert eta.shape == (74, 5, 5)
    np.testing.assert_array_equal(eta, np.transpose(eta, (0, 2, 1)))
    assert eta[-1, 3, 3] == pytest.approx(100.0)


def test_planner_cost_does_not_exceed_game_cost(short):
    params, grid = short
    pol = cm.RegulatorPolicy(50.0, 1000.0)
    mfc = cm.social_opt(params, pol, grid)
    mfg = cm.nash_eq(params, pol, grid)
    assert mfc.converged and mfg.converged
    assert mfc.kind != mfg.kind
    assert mfc.xbar.shape == (74, 5)
    assert mfc.control.shape == (74,)
    assert mfc.cost_hat <= mfg.cost_hat * (1 + 1e-8)


def test_no_tax_means_no_renewables(short):
    params, grid = short
    pol = cm.RegulatorPolicy(0.0, 1000.0)
    assert cm.social_opt(params, pol, grid).r_e_hat == 0.0
    assert cm.nash_eq(params, pol, grid).r_e_hat == 0.0


def test_invalid_parameters_raise():
    params = cm.baseline_producer_params(20.0 / 730.0)
    params.c1 = -1.0
    with pytest.raises(cm.SolverError):
        params.validate()
    with pytest.raises(cm.SolverError):
        cm.TimeGrid(1.0, 1)


def test_run_reports_exit_codes(tmp_path):
    code, _, err = cm.run("solve-mfc", str(tmp_path / "missing.toml"))
    assert code == 4
    assert err
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nhorizon = -1\n")
    assert cm.run("solve-mfc", str(bad))[0] == 2
    with pytest.raises(ValueError):
        cm.run("no-such-command", str(bad))


def test_run_writes_outputs(tmp_path):
    text = (ROOT / "configs" / "baseline.toml").read_text()
    text = text.replace("horizon = 20.0", "horizon = 2.0").replace("n_steps = 730", "n_steps = 73")
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(text)
    code, _, _ = cm.run("solve-mfc", str(cfg), out=str(tmp_path / "out"))
    assert code == 0
    assert (tmp_path / "out" / "manifest.json").exists()
    assert len(cm.config_hash(str(cfg))) == 64
