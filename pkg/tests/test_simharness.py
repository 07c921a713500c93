import csv
from dataclasses import replace

import numpy as np
import pytest

from blindcal.calib import StepSchedule
from blindcal.errors import AssumptionError, ConfigError, DivergenceError
from blindcal.netgraph import WeightedDigraph
from blindcal.signals import NoiseSpec, SignalModel
from blindcal.simharness import (
    EnsembleStats,
    SimConfig,
    consensus_spread,
    distance_to_limit,
    equivalent_stack,
    fit_rate,
    monte_carlo,
    run,
    write_ensemble_csv,
    write_metrics_csv,
    write_trajectory_csv,
)
from blindcal.spectral import assemble_mean_B, predicted_limit

POWER = StepSchedule("power", m1=0.5, m2=10.0, mu=0.75)


def consensual_theta(alpha, beta, g=1.2, f=-0.3):
    a = g / np.asarray(alpha)
    return np.column_stack([a, f - a * np.asarray(beta)])


@pytest.fixture
def small_cfg(noiseless_cfg):
    return replace(noiseless_cfg, rounds=600, cadence=50)


def test_consensual_state_is_stationary(noiseless_cfg):
    c = noiseless_cfg
    cfg = replace(c, theta0=consensual_theta(c.alpha, c.beta), rounds=2000, cadence=100)
    tr = run(cfg)
    np.testing.assert_allclose(tr.rho, np.broadcast_to([1.2, -0.3], tr.rho.shape), atol=1e-12)
    assert tr.spread.max() < 1e-12


def test_noiseless_preset_reaches_consensus(noiseless_cfg):
    tr = run(replace(noiseless_cfg, cadence=100))
    assert tr.times[-1] == 10_000
    assert tr.spread[-1] < 1e-6
    assert tr.dist_limit[-1] < 1e-4
    # after the transient each 100-round block ends below the previous one until rounding takes over
    blocks = tr.spread[tr.times >= 100]
    blocks = blocks[blocks > 1e-13]
    assert len(blocks) >= 5
    assert np.all(np.diff(blocks) < 0)


def test_first_round_by_hand():
    g = WeightedDigraph(np.array([[0.0, 1.0], [1.0, 0.0]]))
    cfg = SimConfig(g, [1.5, 0.5], [0.2, -0.1], schedule=StepSchedule("constant", delta=0.1), rounds=1,
                    cadence=1, seed=4)
    tr = run(cfg)
    from blindcal.signals import SignalGenerator

    x = SignalGenerator(cfg.signal, 4, 0).take(1)[0]
    y = np.array([1.5, 0.5]) * x + np.array([0.2, -0.1])
    z = y.copy()  # a = 1, b = 0
    acc = np.array([z[1] - z[0], z[0] - z[1]])
    want = np.column_stack([1 + 0.1 * acc * y, 0.1 * acc])
    np.testing.assert_allclose(tr.theta[1], want, rtol=1e-15)
    np.testing.assert_array_equal(tr.times, [0, 1])


def test_trajectory_equivalents_recomputed(lossy_cfg):
    tr = run(replace(lossy_cfg, rounds=3000))
    np.testing.assert_array_equal(tr.g, tr.theta[..., 0] * tr.alpha)
    np.testing.assert_array_equal(tr.f, tr.theta[..., 0] * tr.beta + tr.theta[..., 1])
    np.testing.assert_array_equal(tr.rho, equivalent_stack(tr.theta, tr.alpha, tr.beta))


def test_reproducible(lossy_cfg):
    cfg = replace(lossy_cfg, rounds=5000)
    a, b = run(cfg), run(cfg)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.digest == b.digest
    c = run(cfg, run_index=1)
    assert not np.array_equal(a.theta, c.theta)
    d = run(replace(cfg, seed=cfg.seed + 1))
    assert not np.array_equal(a.theta, d.theta)
    assert d.digest != a.digest


def test_snapshot_times(small_cfg):
    tr = run(replace(small_cfg, rounds=620))
    np.testing.assert_array_equal(tr.times, list(range(0, 601, 50)) + [620])
    assert tr.theta.shape == (len(tr.times), 10, 2)


def test_pinned_nodes_are_constant(lossy_cfg):
    fixed = (0, 4, 7)
    th = lossy_cfg.theta0.copy()
    th[4] = (1.1, 0.2)
    cfg = replace(lossy_cfg, pinned=fixed, theta0=th, rounds=3000)
    tr = run(cfg)
    for k in fixed:
        np.testing.assert_array_equal(tr.theta[:, k], np.broadcast_to(th[k], (len(tr.times), 2)))
    assert tr.limit.shape == (10, 2)


@pytest.mark.parametrize(
    "rho, expected",
    [(np.ones((4, 2)), 0.0), (np.array([[1.0, 0.0], [1.0, 1.0]]), 1.0),
     (np.array([[0.5, 0.0], [1.0, 0.1], [0.9, -0.3]]), 0.5)],
)
def test_consensus_spread(rho, expected):
    assert consensus_spread(rho) == pytest.approx(expected)


def test_consensus_spread_permutation(rng):
    rho = rng.normal(size=(8, 2))
    assert consensus_spread(rho) == consensus_spread(rho[rng.permutation(8)])
    brute = max(np.abs(rho[i] - rho[j]).max() for i in range(8) for j in range(8))
    assert consensus_spread(rho) == pytest.approx(brute)


def test_distance_to_limit():
    rho = np.array([[1.0, 0.0], [1.2, -0.1]])
    assert distance_to_limit(rho, rho) == 0
    assert distance_to_limit(rho, [1.0, 0.0]) == pytest.approx(0.2)
    stack = np.stack([rho, rho + 0.5])
    np.testing.assert_allclose(distance_to_limit(stack, rho), [0, 0.5])


def test_divergence_guard(noiseless_cfg):
    cfg = replace(noiseless_cfg, schedule=StepSchedule("constant", delta=1.0), rounds=2000)
    with pytest.raises(DivergenceError) as err:
        run(cfg)
    assert err.value.threshold == 1e6
    assert 1 <= err.value.round_index <= 2000


def test_validation_errors(noiseless_cfg, lossy_cfg):
    c = noiseless_cfg
    alpha = c.alpha.copy()
    alpha[3] = 0
    with pytest.raises(AssumptionError, match="A4"):
        replace(c, alpha=alpha).validate()
    split = WeightedDigraph.from_arcs(10, [(i, i + 1, 1.0) for i in range(4)] + [(i, i + 1, 1.0) for i in range(5, 9)])
    with pytest.raises(AssumptionError) as err:
        replace(c, graph=split).validate()
    assert err.value.label == "A3"
    with pytest.raises(ConfigError, match="failure_demo"):
        replace(lossy_cfg, lag=0).validate()
    replace(lossy_cfg, lag=0, failure_demo=True).validate()
    with pytest.raises(AssumptionError) as err:
        replace(lossy_cfg, signal=SignalModel("iid-uniform")).validate()
    assert err.value.label == "A4'"
    dead = NoiseSpec(10, link_up_p=np.where(c.graph.weights > 0, 0.0, 1.0))
    with pytest.raises(AssumptionError) as err:
        replace(c, noise=dead).validate()
    assert err.value.label == "A5"
    with pytest.raises(ConfigError):
        replace(c, variant="basic", lag=2)


def test_pinning_requires_reachability():
    g = WeightedDigraph.from_arcs(3, [(0, 1, 1.0), (1, 0, 1.0)])
    cfg = SimConfig(g, [1, 1, 1], [0, 0, 0], pinned=(0,))
    with pytest.raises(AssumptionError) as err:
        cfg.validate()
    assert err.value.label == "pinning reachability"


def test_monte_carlo_consensual_runs_identical(noiseless_cfg):
    c = noiseless_cfg
    cfg = replace(c, theta0=consensual_theta(c.alpha, c.beta), rounds=500, cadence=50)
    st = monte_carlo(cfg, 4)
    assert st.mse_ci.max() < 1e-20
    assert st.rho_se.max() < 1e-12


def test_monte_carlo_aggregates_runs(small_cfg):
    st = monte_carlo(small_cfg, 3)
    trs = [run(small_cfg, k) for k in range(3)]
    mse = np.array([t.mse_proj for t in trs])
    np.testing.assert_allclose(st.mse_mean, mse.mean(axis=0), rtol=1e-14)
    np.testing.assert_allclose(st.mse_ci, 1.96 * mse.std(axis=0, ddof=1) / np.sqrt(3), rtol=1e-12)
    np.testing.assert_allclose(st.rho_mean, np.mean([t.rho for t in trs], axis=0), rtol=1e-14)
    g = np.concatenate([t.g for t in trs], axis=1)
    np.testing.assert_array_equal(st.g_median, np.median(g, axis=1))


def test_monte_carlo_workers_and_prefix(lossy_cfg):
    cfg = replace(lossy_cfg, rounds=2000)
    serial = monte_carlo(cfg, 4, workers=1)
    pooled = monte_carlo(cfg, 4, workers=2)
    np.testing.assert_array_equal(serial.mse_mean, pooled.mse_mean)
    np.testing.assert_array_equal(serial.rho_mean, pooled.rho_mean)
    # a larger ensemble contains the same first runs
    for k in range(2):
        np.testing.assert_array_equal(run(cfg, k).theta, run(cfg, k).theta)
    first = monte_carlo(cfg, 2)
    both = monte_carlo(cfg, 4)
    trs = [run(cfg, k) for k in range(4)]
    np.testing.assert_allclose(first.mse_mean, np.mean([t.mse_proj for t in trs[:2]], axis=0), rtol=1e-14)
    np.testing.assert_allclose(both.mse_mean, np.mean([t.mse_proj for t in trs], axis=0), rtol=1e-14)


def test_monte_carlo_needs_runs(small_cfg):
    with pytest.raises(ValueError):
        monte_carlo(small_cfg, 0)


def test_projected_mse_is_zero_at_consensus(noiseless_cfg):
    c = noiseless_cfg
    tr = run(replace(c, theta0=consensual_theta(c.alpha, c.beta), rounds=10, cadence=5))
    assert tr.mse_proj.max() < 1e-24


def test_ensemble_mean_tracks_mean_iteration(noiseless_cfg):
    c = noiseless_cfg
    rng = np.random.default_rng(0)
    th0 = np.column_stack([rng.uniform(0.6, 1.4, 10), rng.normal(0, 0.3, 10)])
    delta = 1e-3
    cfg = replace(c, theta0=th0, schedule=StepSchedule("constant", delta=delta), rounds=1000, cadence=100)
    st = monte_carlo(cfg, 100)
    dyn = assemble_mean_B((c.alpha, c.beta), c.graph, c.signal)
    M = np.eye(20) + delta * dyn.B
    rho = equivalent_stack(th0, c.alpha, c.beta).ravel()
    for k, t in enumerate(st.times):
        want = np.linalg.matrix_power(M, int(t)) @ rho
        dev = np.abs(st.rho_mean[k].ravel() - want)
        assert np.all(dev <= 3 * st.rho_se[k].ravel() + 1e-12), t
    # the deterministic iteration heads to the predicted limit
    far = np.linalg.matrix_power(M, 200_000) @ rho
    np.testing.assert_allclose(far.reshape(10, 2), np.tile(predicted_limit(dyn, rho.reshape(10, 2)), (10, 1)),
                               atol=1e-8)


@pytest.mark.parametrize("power", [1.0, 0.5, 0.25])
def test_fit_rate_synthetic(power):
    t = np.arange(10, 100_001, 10)
    mse = POWER.values(1, 100_000)[t - 1] ** power
    fit = fit_rate((t, mse), POWER)
    assert fit.sigma_hat == pytest.approx(power, abs=1e-9)
    assert fit.window == (10_000.0, 100_000.0)
    assert fit.monotone is (power >= 0.2)


def test_fit_rate_detects_non_decreasing_ratio():
    t = np.arange(10, 100_001, 10)
    mse = np.full(len(t), 1e-3)
    fit = fit_rate((t, mse), POWER, sigma=0.2)
    assert not fit.monotone
    assert fit.sigma_hat == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_rejects_constant_schedule():
    with pytest.raises(ValueError, match="decreasing"):
        fit_rate((np.arange(1, 100), np.ones(99)), StepSchedule("constant"))


def test_fit_rate_custom_window():
    t = np.arange(1, 1001)
    mse = POWER.values(1, 1000) ** 0.7
    mse[t > 500] = 1.0
    fit = fit_rate((t, mse), POWER, window=(50, 500))
    assert fit.sigma_hat == pytest.approx(0.7)


def test_csv_outputs(tmp_path, small_cfg):
    tr = run(small_cfg)
    write_trajectory_csv(tr, tmp_path / "t.csv")
    write_metrics_csv(tr, tmp_path / "m.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "node", "a_hat", "b_hat", "g_hat", "f_hat"]
    assert len(rows) == 1 + len(tr.times) * 10
    last = np.array([[float(v) for v in r[2:]] for r in rows[-10:]])
    np.testing.assert_array_equal(last[:, :2], tr.theta[-1])
    np.testing.assert_array_equal(last[:, 2:], tr.rho[-1])
    with open(tmp_path / "m.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "spread", "dist_limit", "mse_proj"]
    np.testing.assert_array_equal([float(r[3]) for r in rows[1:]], tr.mse_proj)

    st = EnsembleStats(np.array([0, 10]), 2, np.array([1 / 3, 2 / 3]), np.array([0.1, 0.2]), None, None, None,
                       None, "x")
    write_ensemble_csv(st, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "t,mse_mean,mse_ci"
    assert lines[1] == "0,0.33333333333333331,0.10000000000000001"
