"""Machine validation, step semantics, and JSON round-trips."""

import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twowayfa import lm
from twowayfa.core import (
    LEFT_ENDMARKER,
    RIGHT_ENDMARKER,
    Measurement,
    StateVector,
    Tape,
    UnitaryMatrix,
)
from twowayfa.machines import (
    CAT_BOUNDARY,
    CAT_DISTRIBUTION_SUM,
    CAT_MEASUREMENT_COMPLETENESS,
    CAT_MISSING_ENTRY,
    CAT_UNITARITY,
    CoinDistribution,
    Configuration,
    Outcome,
    Pfa2,
    Qcfa2,
    issue_errors,
    machine_from_json,
    machine_to_json,
    pfa_step,
    qcfa_step,
    save_machine,
    load_machine,
    validate_pfa,
    validate_qcfa,
)

HALF = Fraction(1, 2)


def tiny_pfa(**overrides) -> Pfa2:
    """Two-state scanner accepting at the right end."""
    tr = {}
    for sym in ("a", "b", LEFT_ENDMARKER):
        tr[("go", sym)] = CoinDistribution.deterministic("go", 1)
    tr[("go", RIGHT_ENDMARKER)] = CoinDistribution.deterministic("acc", 0)
    fields = dict(
        states=("go", "acc", "rej"),
        alphabet=("a", "b"),
        initial="go",
        accept=frozenset({"acc"}),
        reject=frozenset({"rej"}),
        transitions=tr,
        loop_marker=None,
    )
    fields.update(overrides)
    return Pfa2(**fields)


def test_builders_validate_clean(qcfa_default, pfa_k2):
    assert validate_qcfa(qcfa_default) == []
    assert validate_pfa(pfa_k2) == []


def test_validator_nonstochastic_row(pfa_k1):
    tr = dict(pfa_k1.transitions)
    tr[("find-c", "a")] = CoinDistribution.of({("find-c", 1): HALF, ("to-start", 1): Fraction(1, 4)})
    broken = Pfa2(pfa_k1.states, pfa_k1.alphabet, pfa_k1.initial, pfa_k1.accept,
                  pfa_k1.reject, tr, pfa_k1.loop_marker)
    cats = {i.category for i in issue_errors(validate_pfa(broken))}
    assert cats == {CAT_DISTRIBUTION_SUM}


def test_validator_boundary_violation(pfa_k1):
    tr = dict(pfa_k1.transitions)
    tr[("to-start", LEFT_ENDMARKER)] = CoinDistribution.fair(("find-c", -1), ("find-c", 1))
    broken = Pfa2(pfa_k1.states, pfa_k1.alphabet, pfa_k1.initial, pfa_k1.accept,
                  pfa_k1.reject, tr, pfa_k1.loop_marker)
    cats = {i.category for i in issue_errors(validate_pfa(broken))}
    assert cats == {CAT_BOUNDARY}


def test_validator_zero_weight_boundary_entry_is_fine(pfa_k1):
    tr = dict(pfa_k1.transitions)
    tr[("to-start", LEFT_ENDMARKER)] = CoinDistribution.of(
        {("find-c", -1): Fraction(0), ("find-c", 1): Fraction(1)})
    machine = Pfa2(pfa_k1.states, pfa_k1.alphabet, pfa_k1.initial, pfa_k1.accept,
                   pfa_k1.reject, tr, pfa_k1.loop_marker)
    assert issue_errors(validate_pfa(machine)) == []


def test_validator_missing_entry():
    m = tiny_pfa()
    tr = dict(m.transitions)
    del tr[("go", "b")]
    broken = tiny_pfa(transitions=tr)
    cats = {i.category for i in issue_errors(validate_pfa(broken))}
    assert cats == {CAT_MISSING_ENTRY}


def test_validator_coin_note_is_informational():
    tr = dict(tiny_pfa().transitions)
    tr[("go", "a")] = CoinDistribution.of({("go", 1): Fraction(1, 4), ("acc", 0): Fraction(3, 4)})
    machine = tiny_pfa(transitions=tr)
    report = validate_pfa(machine)
    assert issue_errors(report) == []
    assert any(i.note and i.category == "coin-values" for i in report)


def test_validator_halting_overlap():
    broken = tiny_pfa(reject=frozenset({"rej", "acc"}))
    cats = {i.category for i in validate_pfa(broken)}
    assert "halting-overlap" in cats


def test_validator_qcfa_non_unitary(qcfa_default):
    theta = dict(qcfa_default.theta)
    bad = np.eye(4, dtype=complex)
    bad[0, 0] = 1.1
    theta[("scan", "a")] = UnitaryMatrix(bad)
    broken = Qcfa2(qcfa_default.quantum_states, qcfa_default.states, qcfa_default.alphabet,
                   qcfa_default.initial_quantum, qcfa_default.initial, qcfa_default.accept,
                   qcfa_default.reject, theta, qcfa_default.delta_u, qcfa_default.delta_m,
                   qcfa_default.loop_marker)
    cats = {i.category for i in issue_errors(validate_qcfa(broken))}
    assert cats == {CAT_UNITARITY}


def test_validator_qcfa_incomplete_measurement(qcfa_default):
    theta = dict(qcfa_default.theta)
    projs = (np.diag([1.0, 0, 0, 0]).astype(complex), np.diag([0, 1.0, 1.0, 0]).astype(complex))
    theta[("scan", RIGHT_ENDMARKER)] = Measurement(projs, ("q2", "q3"))
    delta_m = dict(qcfa_default.delta_m)
    broken = Qcfa2(qcfa_default.quantum_states, qcfa_default.states, qcfa_default.alphabet,
                   qcfa_default.initial_quantum, qcfa_default.initial, qcfa_default.accept,
                   qcfa_default.reject, theta, qcfa_default.delta_u, delta_m,
                   qcfa_default.loop_marker)
    cats = {i.category for i in issue_errors(validate_qcfa(broken))}
    assert cats == {CAT_MEASUREMENT_COMPLETENESS}


def test_validator_qcfa_outcome_coverage(qcfa_default):
    delta_m = dict(qcfa_default.delta_m)
    del delta_m[("scan", RIGHT_ENDMARKER, "q1")]
    broken = Qcfa2(qcfa_default.quantum_states, qcfa_default.states, qcfa_default.alphabet,
                   qcfa_default.initial_quantum, qcfa_default.initial, qcfa_default.accept,
                   qcfa_default.reject, qcfa_default.theta, qcfa_default.delta_u, delta_m,
                   qcfa_default.loop_marker)
    cats = {i.category for i in issue_errors(validate_qcfa(broken))}
    assert cats == {"outcome-coverage"}


def test_pfa_step_deterministic_ignores_draw():
    m = tiny_pfa()
    tape = Tape("ab")
    for u in (0.0, 0.5, 0.999):
        nxt = pfa_step(m, Configuration("go", 0), tape, u)
        assert nxt == Configuration("go", 1)


def test_pfa_step_inverse_cdf_order():
    tr = dict(tiny_pfa().transitions)
    tr[("go", "a")] = CoinDistribution.fair(("sL", -1), ("sR", 1))
    m = tiny_pfa(states=("go", "sL", "sR", "acc", "rej"), transitions=tr)
    tape = Tape("ab")
    assert pfa_step(m, Configuration("go", 1), tape, 0.7) == Configuration("sR", 2)
    assert pfa_step(m, Configuration("go", 1), tape, 0.2) == Configuration("sL", 0)


def test_pfa_step_halts():
    m = tiny_pfa()
    assert pfa_step(m, Configuration("go", 2), Tape("a"), 0.1) == Outcome.ACCEPT


def test_qcfa_step_scan_applies_rotation(qcfa_default):
    tape = Tape("aca")
    config = Configuration("scan", 1, StateVector.basis(4, 0))
    out = qcfa_step(qcfa_default, config, tape, 0.0)
    assert out.state == "scan" and out.pos == 2
    expected = lm.letter_rotation().entries[:, 0]
    assert np.max(np.abs(out.psi.amplitudes - expected)) < 1e-12


def test_qcfa_step_measurement_branches(qcfa_default):
    tape = Tape("acaa")
    psi = lm.post_scan_state(1, 2)
    at_end = Configuration("scan", tape.last_pos, psi)
    # nearly all mass sits on q3 -> rejection for large draws
    out = qcfa_step(qcfa_default, at_end, tape, 0.99)
    assert out == Outcome.REJECT
    out = qcfa_step(qcfa_default, at_end, tape, 0.01)
    assert isinstance(out, Configuration)
    assert out.state == "walk1-rewind"
    # collapse lands on q2 up to a global phase
    assert out.psi.overlap_sq(StateVector.basis(4, 2)) == pytest.approx(1.0, abs=1e-12)


def test_qcfa_member_measurement_always_proceeds(qcfa_default):
    tape = Tape("aca")
    psi = lm.post_scan_state(1, 1)
    for u in (0.0, 0.999999):
        out = qcfa_step(qcfa_default, Configuration("scan", tape.last_pos, psi), tape, u)
        assert isinstance(out, Configuration)


def test_roundtrip_qcfa(qcfa_default, tmp_path):
    doc = machine_to_json(qcfa_default)
    again = machine_to_json(machine_from_json(json.loads(json.dumps(doc))))
    assert doc == again
    path = tmp_path / "m.json"
    save_machine(qcfa_default, str(path))
    loaded = load_machine(str(path))
    assert machine_to_json(loaded) == doc
    assert validate_qcfa(loaded) == []


def test_roundtrip_pfa(pfa_k2, tmp_path):
    doc = machine_to_json(pfa_k2)
    again = machine_to_json(machine_from_json(doc))
    assert doc == again
    assert doc["kind"] == "pfa2"
    entry = doc["transitions"][0]["action"]["entries"][0]
    assert set(entry) == {"state", "move", "prob"}
    assert set(entry["prob"]) == {"num", "den"}


def test_serialized_matrix_is_row_major(qcfa_default):
    doc = machine_to_json(qcfa_default)
    rec = next(t for t in doc["transitions"]
               if t["state"] == "scan" and t["symbol"] == "c")
    cells = rec["action"]["matrix"]
    mat = np.array([complex(c["re"], c["im"]) for c in cells]).reshape(4, 4)
    assert np.array_equal(mat, lm.marker_swap().entries)


@st.composite
def random_pfas(draw):
    n_states = draw(st.integers(2, 4))
    names = [f"s{i}" for i in range(n_states)]
    states = tuple(names) + ("acc", "rej")
    targets = list(states)
    tr = {}
    for s in names:
        for sym in ("a", "b", LEFT_ENDMARKER, RIGHT_ENDMARKER):
            moves = [mv for mv in (-1, 0, 1) if (sym != LEFT_ENDMARKER or mv >= 0)
                     and (sym != RIGHT_ENDMARKER or mv <= 0)]
            kind = draw(st.integers(0, 1))
            t1 = (draw(st.sampled_from(targets)), draw(st.sampled_from(moves)))
            if kind == 0:
                tr[(s, sym)] = CoinDistribution.deterministic(*t1)
            else:
                t2 = (draw(st.sampled_from(targets)), draw(st.sampled_from(moves)))
                if t1 == t2:
                    tr[(s, sym)] = CoinDistribution.deterministic(*t1)
                else:
                    tr[(s, sym)] = CoinDistribution.fair(t1, t2)
    return Pfa2(states, ("a", "b"), "s0", frozenset({"acc"}), frozenset({"rej"}), tr)


@settings(max_examples=60, deadline=None)
@given(random_pfas())
def test_random_pfa_roundtrip_and_validation(machine):
    assert issue_errors(validate_pfa(machine)) == []
    doc = machine_to_json(machine)
    back = machine_from_json(json.loads(json.dumps(doc)))
    assert machine_to_json(back) == doc
    assert back.transitions == machine.transitions


def test_head_stays_in_bounds_sampled(qcfa_default, pfa_k2):
    from twowayfa import runtime

    # the interpreted stepper raises if the head ever leaves the tape
    for machine in (qcfa_default, pfa_k2):
        for word in ("", "c", "aca", "acaa", "ababcbaba"):
            for seed in range(3):
                runtime.run_trajectory(machine, word, seed, 200, engine="python")
