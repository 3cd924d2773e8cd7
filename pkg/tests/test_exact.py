"""Absorbing-chain solves, forward propagation, and series composers."""

from fractions import Fraction

import numpy as np
import pytest

from twowayfa import lm
from twowayfa.core import LEFT_ENDMARKER, RIGHT_ENDMARKER, Measurement, UnitaryMatrix
from twowayfa.machines import CoinDistribution, Pfa2, Qcfa2
from twowayfa.exact import (
    ACCEPT_SINK,
    REJECT_SINK,
    ConfigChain,
    absorption_probs,
    build_config_chain,
    freeze_configs,
    one_step_mass,
    qcfa_forward,
    random_walk_chain,
    two_outcome_series,
)

HALF = Fraction(1, 2)


def walker_machine() -> Pfa2:
    tr = {
        ("walk", "a"): CoinDistribution.fair(("walk", -1), ("walk", 1)),
        ("walk", LEFT_ENDMARKER): CoinDistribution.deterministic("rej", 0),
        ("walk", RIGHT_ENDMARKER): CoinDistribution.deterministic("acc", 0),
    }
    return Pfa2(("walk", "acc", "rej"), ("a",), "walk",
                frozenset({"acc"}), frozenset({"rej"}), tr)


def test_walker_chain_shape():
    n = 6
    chain = build_config_chain(walker_machine(), "a" * (n - 1), initial=("walk", 1))
    assert chain.size == n + 1  # all positions 0..N are visited in the walk state
    interior = [row for cfg, row in zip(chain.configs, chain.rows) if 0 < cfg[1] < n]
    assert all(sorted(p for _, p in row) == [HALF, HALF] for row in interior)
    res = absorption_probs(chain, exact=True)
    assert res.p_accept == Fraction(1, n)


def test_sweep_machine_chain_is_path():
    tr = {}
    for sym in ("a", LEFT_ENDMARKER):
        tr[("go", sym)] = CoinDistribution.deterministic("go", 1)
    tr[("go", RIGHT_ENDMARKER)] = CoinDistribution.deterministic("acc", 0)
    m = Pfa2(("go", "acc", "rej"), ("a",), "go", frozenset({"acc"}), frozenset({"rej"}), tr)
    chain = build_config_chain(m, "aaa")
    assert chain.size == 5  # one config per position 0..4
    for row in chain.rows:
        assert len(row) == 1
    res = absorption_probs(chain, exact=True)
    assert res.p_accept == 1 and res.expected_steps == 5


def test_lm_chain_rows_exactly_stochastic(pfa_k1):
    chain = build_config_chain(pfa_k1, "aca")
    for row in chain.rows:
        assert sum((p for _, p in row), Fraction(0)) == 1


def test_chain_rejects_bad_rows():
    with pytest.raises(ValueError, match="sums"):
        ConfigChain((("x", 0),), (((ACCEPT_SINK, HALF),),), 0)


def test_walk_absorption_small():
    assert absorption_probs(random_walk_chain(2)).p_accept == pytest.approx(0.5, abs=1e-15)
    res = absorption_probs(random_walk_chain(5))
    assert res.p_accept == pytest.approx(0.2, abs=1e-12)
    assert res.p_reject == pytest.approx(0.8, abs=1e-12)
    assert res.p_diverge <= 1e-12


def test_walk_expected_steps_closed_form():
    # from position 1 the expected absorption time is 1*(N-1)
    for n in (2, 3, 10, 50):
        res = absorption_probs(random_walk_chain(n))
        assert res.expected_steps == pytest.approx(n - 1, abs=1e-9)


def test_divergent_chain():
    # two states looping into each other, no absorber reachable
    chain = ConfigChain(
        (("x", 0), ("x", 1)),
        (((1, Fraction(1)),), ((0, Fraction(1)),)),
        0,
    )
    res = absorption_probs(chain)
    assert res.p_diverge == 1.0
    assert res.p_accept == 0.0
    assert res.expected_steps is None


def test_partially_divergent_chain():
    chain = ConfigChain(
        (("x", 0), ("loop", 0)),
        ((((ACCEPT_SINK), HALF), (1, HALF)), ((1, Fraction(1)),)),
        0,
    )
    res = absorption_probs(chain, exact=True)
    assert res.p_accept == HALF
    assert res.p_diverge == HALF
    assert res.expected_steps is None


def test_absorption_matches_power_iteration_oracle():
    rng = np.random.default_rng(7)

    def oracle(chain):
        n = chain.size
        full = np.zeros((n + 2, n + 2))
        full[n, n] = full[n + 1, n + 1] = 1.0
        for i, row in enumerate(chain.rows):
            for t, p in row:
                j = n if t == ACCEPT_SINK else n + 1 if t == REJECT_SINK else t
                full[i, j] += float(p)
        v = np.zeros(n + 2)
        v[chain.initial] = 1.0
        out = v @ np.linalg.matrix_power(full, 2**20)
        return out[n], out[n + 1]

    chains = [random_walk_chain(n) for n in (3, 11, 40)]
    chains.append(build_config_chain(lm.build_lm_pfa(1), "c"))
    for size in (6, 14, 33):
        configs = tuple(("s", i) for i in range(size))
        rows = []
        for i in range(size):
            t1 = int(rng.integers(-2, size))
            t2 = int(rng.integers(-2, size))
            if t1 == t2:
                rows.append(((t1, Fraction(1)),))
            else:
                rows.append(((t1, HALF), (t2, HALF)))
        chains.append(ConfigChain(configs, tuple(rows), 0))
    for chain in chains:
        res = absorption_probs(chain)
        oa, orj = oracle(chain)
        assert res.p_accept == pytest.approx(oa, abs=1e-8)
        assert res.p_reject == pytest.approx(orj, abs=1e-8)


def test_absorption_sparse_path():
    # beyond the dense-solver cutoff the sparse LU path takes over
    n = 6000
    res = absorption_probs(random_walk_chain(n))
    assert abs(res.p_accept - 1 / n) < 1e-10
    assert res.expected_steps == pytest.approx(n - 1, rel=1e-9)


def test_exact_and_float_agree(pfa_k2):
    chain = build_config_chain(pfa_k2, "aca")
    f = absorption_probs(chain)
    e = absorption_probs(chain, exact=True)
    assert f.p_accept == pytest.approx(float(e.p_accept), abs=1e-12)
    assert f.expected_steps == pytest.approx(float(e.expected_steps), rel=1e-10)


def test_freeze_and_one_step(pfa_k1):
    chain = build_config_chain(pfa_k1, "aca", initial=lm.PFA_LOOP_ENTRY)
    entry = chain.index(lm.PFA_LOOP_ENTRY)
    dist = one_step_mass(chain, entry)
    assert sum(dist.values()) == 1
    cut = freeze_configs(chain, lambda c: c == lm.PFA_LOOP_ENTRY)
    res = absorption_probs(cut, exact=True, initial_mass=dist)
    want_rej, want_acc = lm.pfa_iteration_probs(1, 1, 1)
    assert res.p_reject == want_rej
    assert res.p_accept == want_acc
    assert res.p_diverge == 1 - want_rej - want_acc


# ---------------------------------------------------------------------------
# Forward propagation


def accept_immediately_machine() -> Qcfa2:
    basis = ("q0", "q1")
    meas = Measurement.computational_basis(basis)
    theta = {("s", LEFT_ENDMARKER): meas}
    delta_m = {("s", LEFT_ENDMARKER, "q0"): ("acc", 0), ("s", LEFT_ENDMARKER, "q1"): ("rej", 0)}
    delta_u = {}
    ident = UnitaryMatrix.identity(2)
    for sym in ("a", RIGHT_ENDMARKER):
        theta[("s", sym)] = ident
        delta_u[("s", sym)] = ("rej", 0)
    return Qcfa2(basis, ("s", "acc", "rej"), ("a",), "q0", "s",
                 frozenset({"acc"}), frozenset({"rej"}), theta, delta_u, delta_m)


def test_forward_immediate_accept():
    res = qcfa_forward(accept_immediately_machine(), "a", tail_tol=1e-12, max_steps=10)
    assert res.steps == 1
    assert res.accept == pytest.approx(1.0, abs=1e-15)
    assert res.reject == 0.0
    assert res.residual == 0.0


def test_forward_member_never_rejects(qcfa_default):
    res = qcfa_forward(qcfa_default, "aca", tail_tol=0.0, max_steps=1200, keep_history=True)
    assert max(h[2] for h in res.history) < 1e-12
    assert res.accept > 0.3


def test_forward_nonmember_bound(qcfa_default):
    res = qcfa_forward(qcfa_default, "acaa", tail_tol=1e-6, max_steps=100_000)
    assert res.residual < 1e-6
    assert res.reject >= 0.75


def test_forward_mass_conserved_and_monotone(qcfa_default):
    res = qcfa_forward(qcfa_default, "bcab", tail_tol=1e-7, max_steps=3000, keep_history=True)
    prev = float("inf")
    prev_acc = prev_rej = 0.0
    for _, acc, rej, residual in res.history:
        assert abs(acc + rej + residual - 1.0) < 1e-9
        assert residual <= prev + 1e-15
        assert acc >= prev_acc and rej >= prev_rej
        prev, prev_acc, prev_rej = residual, acc, rej


def test_forward_agrees_with_iteration_formula(qcfa_k2):
    # on 'aca' with k=2 the accept probability is 1 and the per-iteration
    # structure shows up in the convergence rate; run two budgets and
    # compare the residual contraction against 1 - 1/64 per iteration.
    short = qcfa_forward(qcfa_k2, "aca", tail_tol=0.0, max_steps=500)
    long = qcfa_forward(qcfa_k2, "aca", tail_tol=0.0, max_steps=1000)
    assert long.residual < short.residual < 1.0
    assert long.reject < 1e-12


def test_forward_respects_max_steps(qcfa_default):
    res = qcfa_forward(qcfa_default, "aca", tail_tol=0.0, max_steps=37)
    assert res.steps == 37


# ---------------------------------------------------------------------------
# Series composers


def test_series_reject_first_halves():
    assert two_outcome_series(HALF, HALF, "reject_first") == Fraction(2, 3)


def test_series_certain_rejection():
    for p_a in (Fraction(0), Fraction(1, 7), Fraction(1)):
        assert two_outcome_series(p_a, Fraction(1), "reject_first") == 1


def test_series_accept_first_value():
    got = two_outcome_series(Fraction(15, 128), Fraction(1, 16), "accept_first")
    assert got == Fraction(225, 353)
    assert float(got) == pytest.approx(0.6373937677053824, abs=1e-12)


def test_series_matches_partial_sums():
    # brute-force the series definitions to 10k terms
    for p_a, p_r in ((0.3, 0.2), (0.05, 0.6), (0.5, 0.5)):
        rej = sum((1 - p_a) ** i * (1 - p_r) ** i * p_r for i in range(10_000))
        acc = sum((1 - p_a) ** i * (1 - p_r) ** (i + 1) * p_a for i in range(10_000))
        assert two_outcome_series(p_a, p_r, "reject_first") == pytest.approx(rej, abs=1e-12)
        assert two_outcome_series(p_a, p_r, "accept_first") == pytest.approx(acc, abs=1e-12)


def test_series_errors():
    with pytest.raises(ValueError):
        two_outcome_series(0, 0, "reject_first")
    with pytest.raises(ValueError):
        two_outcome_series(0.5, 1.2, "reject_first")
    with pytest.raises(ValueError):
        two_outcome_series(0.5, 0.5, "sideways")
