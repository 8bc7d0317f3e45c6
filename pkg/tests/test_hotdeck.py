import numpy as np
import pytest
from scipy import stats

from chainimp import simulate
from chainimp.data_model import CellState, dataset_from_frame
from chainimp.engine import ImputationError
from chainimp.hotdeck import hotdeck_impute
from conftest import make_ds


def test_constant_pool():
    ds = make_ds({"w": [7, 7, 7, None, None]}, [{"name": "w"}])
    out = hotdeck_impute(ds, 0)
    assert np.all(out.values[0][:, 0] == 7)


def test_bracket_selects_only_in_bracket_donor():
    cols = {"w": [50, 150, 250, None], "lo": [None, None, None, 100], "hi": [None, None, None, 200]}
    ds = make_ds(cols, [{"name": "w", "bounds_low": "lo", "bounds_high": "hi"}])
    for seed in range(10):
        assert hotdeck_impute(ds, seed).values[0][3, 0] == 150


def test_empty_donor_pool_names_variable():
    ds = make_ds({"w": [None, None], "x": [1, 2]}, [{"name": "w"}, {"name": "x"}])
    with pytest.raises(ImputationError, match="w"):
        hotdeck_impute(ds, 0)


def test_values_come_from_donors_and_marginal_preserved():
    rng = np.random.default_rng(0)
    donors = rng.lognormal(0, 1, 2000)
    ds = make_ds({"w": list(donors) + [None] * 10000}, [{"name": "w"}])
    imp = hotdeck_impute(ds, 1).values[0][2000:, 0]
    assert np.isin(imp, donors).all()
    assert stats.ks_2samp(imp, donors).statistic < 0.05


def test_correlation_attenuation():
    rs = []
    for rep in range(20):
        sim = simulate.bivariate(2000, 0.6, 0.4, np.random.default_rng(rep))
        out = hotdeck_impute(dataset_from_frame(sim.frame, sim.config), rep)
        rs.append(np.corrcoef(out.values[0].T)[0, 1])
    assert np.mean(rs) == pytest.approx(0.36, abs=0.05)


def test_restrictions_and_pins_hold():
    sim = simulate.survey(500, np.random.default_rng(3), miss_rate=0.2)
    ds = dataset_from_frame(sim.frame, sim.config)
    out = hotdeck_impute(ds, 4)
    v, s = out.values[0], out.states[0]
    obs = ds.state == CellState.OBSERVED
    np.testing.assert_array_equal(v[obs], ds.values[obs])
    assert not (s == CellState.MISSING).any()
    for j, rule in enumerate(ds.bound_rules):
        if rule is not None:
            truth, _ = rule.evaluate(v, s)
            np.testing.assert_array_equal(s[:, j] != CellState.NOT_APPLICABLE, truth)
    imp = s == CellState.IMPUTED
    assert np.all(~imp | ((v >= ds.lower) & (v <= ds.upper)))


def test_deterministic():
    sim = simulate.survey(300, np.random.default_rng(5))
    ds = dataset_from_frame(sim.frame, sim.config)
    assert hotdeck_impute(ds, 9).values[0].tobytes() == hotdeck_impute(ds, 9).values[0].tobytes()
