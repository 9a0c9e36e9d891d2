import numpy as np
import pytest

from serfsim import errors, kernels
from serfsim.econ import RiskProfile
from serfsim.fixtures import published_models
from serfsim.quantreg import QuantileModel
from serfsim.simulate import (
    BANDS,
    Scenario,
    profits_from_draws,
    run_grid,
    run_scenario,
    scenario_grid,
    simulate_yield_path,
    simulation_inputs,
)

NAMES = ("const", "yield_lag", "bii", "t", "D_Fracture", "t_x_Fracture")


def toy_model(tau=0.5, const=50.0, lag=0.5, bii=-40.0, t=0.0, d=10.0, tx=0.0):
    return QuantileModel(tau, NAMES, np.array([const, lag, bii, t, d, tx]))


@pytest.fixture(scope="module")
def inputs(fixture_dataset):
    return simulation_inputs(fixture_dataset)


def test_published_coefficients():
    models = {m.tau: m for m in published_models()}
    assert sorted(models) == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert models[0.5].coef("bii") == -69.09
    assert len(models[0.5].names) == 10


def test_scenario_grid_layout():
    grid = scenario_grid()
    assert len(grid) == 9
    assert grid[0].scenario_id == "bii-low_q0.2"
    assert [s.band for s in grid[::3]] == list(BANDS.values())
    assert scenario_grid(price_override=11.5)[4].scenario_id == "bii-medium_q0.5_p11.5"


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("x", (0.5, 0.4), 0.5)
    with pytest.raises(ValueError):
        Scenario("x", (0.1, 0.3), 0.5, n_draws=0)
    with pytest.raises(ValueError):
        Scenario("x", (0.1, 0.3), 0.5, price_override=0.0)


def test_inputs_from_fixture(fixture_dataset, inputs):
    assert inputs.n_harvests == 24
    assert inputs.t_start == 49
    assert inputs.prices.shape == (24,)
    assert inputs.total_cost["Control"] == pytest.approx(
        np.mean([fixture_dataset.cost(s, "Control").total_cost for s in fixture_dataset.seasons]))
    first = [r.yield_lb for r in fixture_dataset.records if r.treatment == "Serenade" and r.harvest_index == 1]
    assert inputs.y0["Serenade"] == pytest.approx(np.mean(first))
    assert simulation_inputs(fixture_dataset, t_start=1).t_start == 1


def test_determinism(inputs):
    sc = Scenario("low", (0.1, 0.3), 0.5, n_draws=20, seed=4)
    a = run_scenario(published_models(), inputs, sc)
    b = run_scenario(published_models(), inputs, sc)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.draws, y.draws)
        np.testing.assert_array_equal(x.profits, y.profits)


def test_band_containment_and_coupling(inputs):
    models = published_models()
    runs = {
        level: run_scenario(models, inputs, Scenario(level, band, 0.5, n_draws=30, seed=7))
        for level, band in BANDS.items()
    }
    uniforms = {}
    for level, (lo, hi) in BANDS.items():
        for run in runs[level]:
            assert (run.bii_draws >= lo).all() and (run.bii_draws <= hi).all()
            uniforms.setdefault(run.treatment, []).append((run.bii_draws - lo) / (hi - lo))
    for us in uniforms.values():
        np.testing.assert_allclose(us[0], us[1], atol=1e-12)
        np.testing.assert_allclose(us[0], us[2], atol=1e-12)


def test_streams_independent_of_other_treatments(inputs):
    sc = Scenario("low", (0.1, 0.3), 0.5, n_draws=10, seed=2)
    alone = run_scenario(published_models(), inputs, sc, treatments=["Milstop"])[0]
    together = {r.treatment: r for r in run_scenario(published_models(), inputs, sc)}["Milstop"]
    np.testing.assert_array_equal(alone.bii_draws, together.bii_draws)


def test_profit_consistency(inputs):
    sc = Scenario("medium", (0.4, 0.6), 0.8, n_draws=15, seed=1)
    for run in run_scenario(published_models(), inputs, sc):
        np.testing.assert_allclose(run.profits, (run.draws * run.prices).sum(axis=1) - run.total_cost)
        for d in range(3):
            manual = sum(run.prices[h] * run.draws[d, h] for h in range(24)) - run.total_cost
            assert run.profits[d] == pytest.approx(manual, rel=1e-12)


def test_price_override(inputs):
    sc = Scenario("low", (0.1, 0.3), 0.5, price_override=11.5, n_draws=5)
    for run in run_scenario(published_models(), inputs, sc):
        assert (run.prices == 11.5).all()
        np.testing.assert_allclose(run.profits, 11.5 * run.draws.sum(axis=1) - run.total_cost)


def test_recursion_by_hand():
    m = toy_model(const=10.0, lag=0.5, bii=-20.0, t=1.0, d=5.0, tx=0.5)
    bii = np.array([0.2, 0.4, 0.6])
    out, clamps = simulate_yield_path(m, "Fracture", 3, 100.0, bii, 4)
    expected, prev = [], 100.0
    for s, b in enumerate(bii):
        t = 4 + s
        prev = (10.0 + 5.0) + 0.5 * prev - 20.0 * b + (1.0 + 0.5) * t
        expected.append(prev)
    np.testing.assert_allclose(out, expected)
    assert clamps == 0


def test_clamp_accounting():
    m = toy_model(const=-100.0, lag=0.1, bii=0.0)
    out, clamps = simulate_yield_path(m, "Control", 5, 0.0, np.full((3, 5), 0.5), 1)
    assert (out == 0).all() and clamps == 15
    m2 = toy_model(const=-5.0, lag=1.0, bii=0.0)
    out2, clamps2 = simulate_yield_path(m2, "Control", 4, 12.0, np.full(4, 0.5), 1)
    np.testing.assert_array_equal(out2, [7.0, 2.0, 0.0, 0.0])
    assert clamps2 == 2


def test_backends_identical():
    if kernels.yield_paths_numba is None:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(0)
    bii = rng.random((50, 24))
    noise = rng.normal(0, 30, size=(50, 24))
    args = (20.0, 0.7, -60.0, 1.5, bii, noise, 200.0, 49)
    a = kernels.yield_paths_numba(*args)
    b = kernels.yield_paths_numpy(*args)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_errors(inputs):
    sc = Scenario("low", (0.1, 0.3), 0.35, n_draws=2)
    with pytest.raises(errors.ModelTauMismatch):
        run_scenario(published_models(), inputs, sc)
    with pytest.raises(errors.ModelTauMismatch):
        simulate_yield_path(toy_model(), "Control", 2, 1.0, np.zeros(2), 1, tau=0.2)
    with pytest.raises(errors.UnknownTreatment):
        simulate_yield_path(toy_model(), "Serenade", 2, 1.0, np.zeros(2), 1)
    with pytest.raises(errors.UnknownTreatment):
        run_scenario(published_models(), inputs, Scenario("low", (0.1, 0.3), 0.5, n_draws=2), treatments=["Nope"])


def test_missing_prices(inputs):
    from dataclasses import replace

    no_prices = replace(inputs, prices=None)
    with pytest.raises(errors.MissingPrices):
        run_scenario(published_models(), no_prices, Scenario("low", (0.1, 0.3), 0.5, n_draws=2))
    run_scenario(published_models(), no_prices, Scenario("low", (0.1, 0.3), 0.5, n_draws=2, price_override=10.0))


def test_residual_noise_switch(fixture_dataset, inputs):
    from serfsim.quantreg import build_design, fit_quantile

    m = fit_quantile(build_design(fixture_dataset), 0.5)
    sc = Scenario("low", (0.1, 0.3), 0.5, n_draws=5)
    plain = run_scenario([m], inputs, sc)[0]
    noisy = run_scenario([m], inputs, sc, residual_noise=True)[0]
    np.testing.assert_array_equal(plain.bii_draws, noisy.bii_draws)
    assert not np.array_equal(plain.draws, noisy.draws)
    with pytest.raises(ValueError):
        run_scenario(published_models(), inputs, sc, residual_noise=True)


def test_grid_result(inputs):
    g = run_grid(published_models(), inputs, scenario_grid(n_draws=10), RiskProfile(w0=300000))
    assert len(g.runs) == 9 and len(g.ce) == 9
    cell = g.cell("high", 0.5)
    assert [c.treatment for c in cell] == ["Control", "Fracture", "Milstop", "Serenade"]
    assert g.clamp_count == sum(r.clamp_count for runs in g.runs.values() for r in runs)


def test_profits_from_draws():
    draws = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(profits_from_draws(draws, np.array([10.0, 1.0]), 5.0), [7.0, 29.0])
