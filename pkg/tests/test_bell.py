import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iclab.bell import (
    RandomStates,
    Term,
    classify_ic,
    correlation_tensor_norm,
    evaluate,
    evaluate_settings,
    functional,
    ic_bounds,
    local_max,
    monogamy_sweep,
    optimize_settings,
    optimize_terms,
    relation,
    tradeoff_ic,
)
from iclab.boxes import (
    BoxTable,
    from_function,
    isotropic_box,
    mix,
    pr_box,
    quantum_box,
    sb_box,
    shared_coin_box,
)
from iclab.quantum import (
    PAULI_X,
    PAULI_Y,
    DensityMatrix,
    Observable,
    bloch_vector,
    kron,
    named_state,
    random_pure_state,
)

SQ2 = math.sqrt(2)


def bell_pair_fixture() -> DensityMatrix:
    """Alice and receiver 1 share a singlet, receiver 2 holds |0>."""
    return DensityMatrix(kron(named_state("singlet").matrix, named_state("product:0").matrix))


def brute_local_max(func) -> float:
    """Every deterministic strategy of every party, no shortcuts."""
    best = 0.0
    per_party = [list(itertools.product((1, -1), repeat=n)) for n in func.inputs]
    for strat in itertools.product(*per_party):
        val = 0.0
        for idx in itertools.product(*map(range, func.inputs)):
            sign = 1
            for q, i in enumerate(idx):
                sign *= strat[q][i]
            val += func.coef[idx] * sign
        best = max(best, abs(val))
    return best


def test_functional_values_on_boxes():
    assert evaluate(functional("chsh"), pr_box()) == 4.0
    assert evaluate(functional("sb"), sb_box()) == 8.0
    assert np.array_equal(functional("ic", 2).coef, functional("chsh").coef)
    for E in (-1.0, -0.3, 0.0, 0.5, 1.0):
        assert evaluate(functional("chsh"), isotropic_box(E)) == pytest.approx(4 * E, abs=1e-14)
    det = from_function([(2, 2), (2, 2)], lambda i, o: 1.0 if o == (0, 0) else 0.0)
    assert evaluate(functional("chsh"), det) == 2.0
    with pytest.raises(ValueError):
        functional("bogus")
    with pytest.raises(ValueError):
        evaluate(functional("sb"), pr_box())


def test_chsh_equals_twice_bias_sum():
    from iclab.boxes import bias_xi, one_hot

    for E in (0.2, 0.9):
        b = isotropic_box(E)
        xi = bias_xi(b, 1, one_hot(0, 2)) + bias_xi(b, 1, one_hot(1, 2))
        assert evaluate(functional("chsh"), b) == pytest.approx(2 * xi)


def test_mermin_ghz_pauli_settings():
    X, Y, mX = Observable(PAULI_X), Observable(PAULI_Y), Observable(-PAULI_X)
    ghz = named_state("ghz", 3)
    f = functional("mermin")
    assert evaluate(f, quantum_box(ghz, [[Y, mX]] * 3)) == pytest.approx(4.0, abs=1e-9)
    assert abs(evaluate(f, quantum_box(ghz, [[Y, X]] * 3))) == pytest.approx(4.0, abs=1e-9)


@pytest.mark.parametrize("name,k,want", [("chsh", None, 2.0), ("ic", 3, 6.0), ("ic", 4, 12.0), ("mermin", None, 2.0), ("sb", None, 4.0)])
def test_local_max(name, k, want):
    value, witness = local_max(functional(name, k))
    assert value == want
    assert value == brute_local_max(functional(name, k))
    # the witness strategy attains the value
    f = functional(name, k)
    signs = [np.array([1 - 2 * o for o in w]) for w in witness]
    total = f.coef
    for s in reversed(signs):
        total = total @ s if total.ndim == 1 else np.tensordot(total, s, axes=([total.ndim - 1], [0]))
    assert abs(float(total)) == value


def test_ic_bounds():
    assert ic_bounds(2) == (2.0, 2 * SQ2)
    lo, up = ic_bounds(3)
    assert lo == 6.0 and up == pytest.approx(4 * math.sqrt(3), abs=1e-12)
    lo, up = ic_bounds(5)
    assert lo == 30.0 and up == pytest.approx(16 * math.sqrt(5), abs=1e-12)
    for k in (2, 3, 4, 5):
        assert ic_bounds(k)[0] == local_max(functional("ic", k))[0]
    with pytest.raises(ValueError):
        ic_bounds(1)


def test_classify_ic():
    assert classify_ic(1.5, 2) == "below-local"
    assert classify_ic(2.5, 2) == "physical-window"
    assert classify_ic(-2.5, 2) == "physical-window"
    assert classify_ic(4.0, 2) == "superquantum"


def test_evaluate_linear_and_bounded():
    rng = np.random.default_rng(3)
    f = functional("chsh")
    for _ in range(50):
        # arbitrary (possibly signaling) tables
        t1 = BoxTable(((2, 2), (2, 2)), rng.dirichlet(np.ones(4), size=(2, 2)).reshape(2, 2, 2, 2))
        t2 = BoxTable(((2, 2), (2, 2)), rng.dirichlet(np.ones(4), size=(2, 2)).reshape(2, 2, 2, 2))
        w = rng.random()
        lhs = evaluate(f, mix([t1, t2], [w, 1 - w]))
        assert lhs == pytest.approx(w * evaluate(f, t1) + (1 - w) * evaluate(f, t2), abs=1e-12)
        assert abs(evaluate(f, t1)) <= f.algebraic_max + 1e-12


def test_optimize_known_maxima():
    assert optimize_settings(named_state("singlet"), functional("chsh")).value == pytest.approx(2 * SQ2, abs=1e-6)
    ghz = named_state("ghz", 3)
    assert optimize_settings(ghz, functional("mermin")).value == pytest.approx(4.0, abs=1e-6)
    assert optimize_settings(ghz, functional("sb")).value == pytest.approx(4 * SQ2, abs=1e-4)
    ic3 = optimize_settings(named_state("singlet"), functional("ic", 3)).value
    assert ic3 == pytest.approx(4 * math.sqrt(3), abs=1e-6)
    with pytest.raises(ValueError):
        optimize_settings(ghz, functional("chsh"))


def test_optimized_settings_reproduce_value():
    rho = random_pure_state(3, 4)
    res = optimize_settings(rho, functional("sb"), seed=9)
    box = quantum_box(rho, res.observables())
    assert evaluate(functional("sb"), box) == pytest.approx(res.value, abs=1e-9)
    again = optimize_settings(rho, functional("sb"), seed=9)
    assert again.value == res.value


def test_optimizer_respects_quantum_maxima():
    caps = {"chsh": (2, 2 * SQ2), "mermin": (3, 4.0), "sb": (3, 4 * SQ2)}
    for i in range(200):
        for name, (nq, cap) in caps.items():
            value = optimize_settings(random_pure_state(nq, i), functional(name), seed=i, restarts=2).value
            assert value <= cap + 1e-6, (name, i, value)


def test_optimizer_monotone_passes():
    from iclab.bell import _Problem, _random_settings
    from iclab.quantum import correlation_tensor

    rho = random_pure_state(3, 8)
    rel = relation("chsh8")
    prob = _Problem(correlation_tensor(rho), rel.terms, "sumsq")
    R = _random_settings(np.random.default_rng(0), prob.inputs)
    values = [prob.objective(prob.term_values(R))]
    for _ in range(20):
        values.append(prob.ascend(R, 1, 0.0))
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_chsh8_bell_pair_fixture():
    res = monogamy_sweep(relation("chsh8"), bell_pair_fixture())
    s = res.samples[0]
    assert s["lhs"] == pytest.approx(8.0, abs=1e-6)
    assert abs(s["terms"][0]) == pytest.approx(2 * SQ2, abs=1e-6)
    assert s["terms"][1] == pytest.approx(0.0, abs=1e-6)
    assert not res.violations


def test_chsh8_random_states_small():
    res = monogamy_sweep(relation("chsh8"), RandomStates(3, 40, 5))
    assert res.max_lhs <= 8 + 1e-6
    assert res.violations == []
    assert len({s["seed"] for s in res.samples}) == 40


def test_sweep_with_fixed_settings():
    rel = relation("chsh8")
    z, x = bloch_vector(0, 0), bloch_vector(math.pi / 2, 0)
    settings_ = [np.array([z, x]), np.array([-(z + x) / SQ2, -(z - x) / SQ2]), np.array([z, z])]
    res = monogamy_sweep(rel, bell_pair_fixture(), optimize=False, settings=settings_)
    assert res.samples[0]["lhs"] == pytest.approx(8.0, abs=1e-12)
    assert evaluate_settings(bell_pair_fixture(), rel.terms, settings_)[0] == pytest.approx(2 * SQ2)
    with pytest.raises(ValueError):
        monogamy_sweep(rel, bell_pair_fixture(), optimize=False)


def test_shared_coin_probe_exceeds_chsh8():
    res = monogamy_sweep(relation("chsh8", n=3), shared_coin_box(3))
    assert res.samples[0]["lhs"] == 12.0
    assert res.samples[0]["terms"] == [2.0, 2.0, 2.0]
    assert res.violations == [0]


def test_sb_and_mermin_fixtures():
    ghz0 = DensityMatrix(kron(named_state("ghz", 3).matrix, named_state("product:0").matrix))
    m = monogamy_sweep(relation("mermin16"), ghz0)
    assert m.samples[0]["lhs"] == pytest.approx(16.0, abs=1e-6) and not m.violations
    s = monogamy_sweep(relation("sb64"), ghz0)
    assert s.samples[0]["lhs"] <= 64 + 1e-6 and not s.violations
    sb32 = monogamy_sweep(relation("sb32", n=1), named_state("ghz", 3))
    assert sb32.samples[0]["lhs"] == pytest.approx(32.0, abs=1e-4)


def test_relation_arity_errors():
    with pytest.raises(ValueError):
        monogamy_sweep(relation("chsh8"), named_state("singlet"))
    with pytest.raises(ValueError):
        monogamy_sweep(relation("chsh8"), RandomStates(4, 2, 0))
    with pytest.raises(ValueError):
        relation("chsh9")
    assert relation("ic3").bound == 4.0**2 * 3


def test_correlation_tensor_norm():
    assert correlation_tensor_norm(named_state("product:00")) == 0.0
    assert correlation_tensor_norm(named_state("singlet")) == pytest.approx(2.0, abs=1e-12)


def test_correlation_tensor_norm_local_product_states():
    # local realistic spin directions: product states give sum (a_x^2 + a_y^2)(b_x^2 + b_y^2) <= 1
    angles = [(t, p) for t in np.linspace(0, math.pi, 9) for p in np.linspace(0, 2 * math.pi, 9)]
    spinors = [np.array([math.cos(t / 2), np.exp(1j * p) * math.sin(t / 2)]) for t, p in angles]
    best = 0.0
    for u, v in itertools.product(spinors, repeat=2):
        best = max(best, correlation_tensor_norm(DensityMatrix.from_vector(np.kron(u, v))))
    assert best == pytest.approx(1.0, abs=1e-12)


def test_tradeoff_ic():
    singlet = named_state("singlet")
    res = optimize_settings(singlet, functional("chsh"))
    box = quantum_box(singlet, res.observables())
    t = tradeoff_ic([box], 2)
    assert t["sum_sq"] == pytest.approx(8.0, abs=1e-6) and t["bound"] == 8.0 and t["respected"]
    # receiver 2 of the split fixture holds |0>: its box has zero IC value
    obs = res.observables()
    fixture = bell_pair_fixture()
    z = [Observable(np.diag([1.0, -1.0]))] * 2
    full = quantum_box(fixture, [obs[0], obs[1], z])
    t = tradeoff_ic([full.marginal([0, 1]), full.marginal([0, 2])], 2)
    assert t["sum_sq"] == pytest.approx(8.0, abs=1e-6) and t["respected"]
    res3 = optimize_settings(singlet, functional("ic", 3))
    t3 = tradeoff_ic([quantum_box(singlet, res3.observables())], 3)
    assert t3["bound"] == 48.0 and t3["sum_sq"] <= 48 + 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_optimize_terms_value_consistent(seed):
    rho = random_pure_state(2, seed)
    f = functional("chsh")
    res = optimize_terms(rho, [Term(f, (0, 1))], "value", seed=seed, restarts=1)
    assert res.value == pytest.approx(sum(res.term_values), abs=1e-12)
    assert res.value <= 2 * SQ2 + 1e-9
