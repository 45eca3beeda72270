import numpy as np
import pytest
from scipy.stats import chisquare

from iclab.ising import (
    BetheTree,
    McParams,
    boltzmann_distribution,
    build_tree,
    energy,
    gauge_transform,
    metropolis_run,
    monotonicity,
    temperature_scan,
    xi_report,
)


def test_tree_structure():
    t = build_tree(1)
    assert t.num_vertices == 3
    assert t.edges.tolist() == [[0, 1], [0, 2]]
    for p in range(1, 8):
        t = build_tree(p, "random", seed=p)
        assert len(t.edges) == 2 ** (p + 1) - 2
        # connected: every non-root vertex has its parent earlier in level order
        assert all(parent < child for parent, child in t.edges.tolist())
    for p in (0, 11):
        with pytest.raises(ValueError):
            build_tree(p)
    with pytest.raises(ValueError):
        build_tree(2, "random")
    with pytest.raises(ValueError):
        build_tree(2, J=0.0)


def test_couplings_follow_reference():
    assert np.all(build_tree(3, J=2.0).couplings == 2.0)
    t = build_tree(4, "random", J=1.5, seed=7)
    for (i, j), c in zip(t.edges.tolist(), t.couplings):
        assert c == (1.5 if t.s0[i] == t.s0[j] else -1.5)
    assert set(np.unique(t.couplings)) == {-1.5, 1.5}


def test_energy_examples():
    t = build_tree(3, "random", seed=1)
    n_edges = len(t.edges)
    assert energy(t, t.s0) == -n_edges
    assert energy(t, -t.s0) == -n_edges
    for i in range(t.num_vertices):
        s = t.s0.copy()
        s[i] *= -1
        assert energy(t, s) == -n_edges + 2 * t.degree(i)
    with pytest.raises(ValueError):
        energy(t, t.s0[:-1])


def test_energy_symmetries():
    rng = np.random.default_rng(0)
    t = build_tree(5, "random", seed=3)
    ferro = build_tree(5)
    for _ in range(100):
        s = rng.choice([-1, 1], size=t.num_vertices)
        assert energy(t, s) == energy(t, -s)
        assert abs(energy(t, s) - energy(ferro, gauge_transform(t, s))) <= 1e-12


def test_reference_validation():
    with pytest.raises(ValueError):
        BetheTree(1, np.array([1, 0, 1]))
    with pytest.raises(ValueError):
        BetheTree(2, np.ones(3))
    with pytest.raises(ValueError):
        McParams(T=0.0)
    with pytest.raises(ValueError):
        McParams(T=1.0, measure=0)


def test_low_temperature_orders_along_reference():
    t = build_tree(6, "random", seed=11)
    r = metropolis_run(t, McParams(0.1, burn_in=200, measure=2000, seed=1))
    assert r.gauge_mag > 0.99
    assert np.all(np.abs(r.magnetization) <= 1)


def test_high_temperature_is_paramagnetic():
    t = build_tree(6)
    r = metropolis_run(t, McParams(10.0, burn_in=200, measure=4000, seed=2))
    assert np.all(np.abs(r.magnetization) - 3 * r.site_stderr < 0.05)
    assert r.mean_abs_mag < 0.05


def test_determinism():
    t = build_tree(4, "random", seed=5)
    a = metropolis_run(t, McParams(1.3, 50, 500, seed=9))
    b = metropolis_run(t, McParams(1.3, 50, 500, seed=9))
    assert a.magnetization.tobytes() == b.magnetization.tobytes()
    assert a.energy_trace.tobytes() == b.energy_trace.tobytes()
    c = metropolis_run(t, McParams(1.3, 50, 500, seed=10))
    assert c.energy_trace.tobytes() != a.energy_trace.tobytes()


def test_energy_trace_matches_configuration():
    t = build_tree(3, "random", seed=2)
    r = metropolis_run(t, McParams(2.0, 0, 300, seed=4, thin=1), record_states=True)
    assert r.energy_trace.min() >= -len(t.edges)
    assert r.energy_trace.max() <= len(t.edges)
    assert sum(r.state_counts.values()) == 300


@pytest.mark.parametrize("s0", ["all_plus", "random"])
@pytest.mark.parametrize("T", [0.7, 2.0])
def test_sampler_matches_boltzmann(s0, T):
    t = build_tree(1, s0, seed=3)
    r = metropolis_run(t, McParams(T, burn_in=100, measure=60000, seed=7, thin=10), record_states=True)
    probs = boltzmann_distribution(t, T)
    obs = np.array([r.state_counts.get(i, 0) for i in range(8)])
    stat = chisquare(obs, probs * obs.sum())
    assert stat.pvalue > 1e-3, stat


def test_boltzmann_distribution_ground_states():
    t = build_tree(2, "random", seed=8)
    p = boltzmann_distribution(t, 0.05)
    ground = [int(np.dot(s < 0, 1 << np.arange(t.num_vertices))) for s in (t.s0, -t.s0)]
    assert p[ground].sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        boltzmann_distribution(build_tree(4), 1.0)


def test_temperature_scan():
    t = build_tree(4)
    curve = temperature_scan(t, [0.1, 10.0], McParams(1.0, 100, 2000, seed=3))
    assert len(curve) == 2
    assert curve[0].mean_abs_mag > curve[1].mean_abs_mag + 3 * curve[1].mean_abs_stderr
    assert monotonicity(curve)["mean_abs_mag_nonincreasing"]
    assert len(temperature_scan(t, [1.0], McParams(1.0, 10, 100))) == 1
    with pytest.raises(ValueError):
        temperature_scan(t, [2.0, 1.0], McParams(1.0))


def test_gauge_equivalence_of_scans():
    ferro = build_tree(5)
    glass = build_tree(5, "random", seed=21)
    params = McParams(1.0, 100, 1500, seed=4)
    grid = [0.5, 1.5, 4.0]
    a = temperature_scan(ferro, grid, params)
    b = temperature_scan(glass, grid, params)
    for ra, rb in zip(a, b):
        # matched seeds make the chains gauge images of each other
        assert abs(ra.gauge_mag - rb.gauge_mag) <= 3 * np.hypot(ra.gauge_stderr, rb.gauge_stderr) + 1e-15
        assert ra.gauge_mag == rb.gauge_mag
        assert np.array_equal(ra.energy_trace, rb.energy_trace)


def test_xi_report():
    t = build_tree(2)
    curve = temperature_scan(t, [0.1, 50.0], McParams(1.0, 100, 3000, seed=1))
    rows = xi_report(curve, [1.0, 0.9], 2)
    assert [r["nested_bias"]["1"] for r in rows] == [1.0, 1.0]
    assert rows[0]["nested_bias"]["0.9"] == pytest.approx(0.81, abs=1e-15)
    assert rows[0]["xi_mc"] > 0.9
    assert rows[1]["xi_mc"] < 0.05
    with pytest.raises(ValueError):
        xi_report(curve, [1.2], 2)
