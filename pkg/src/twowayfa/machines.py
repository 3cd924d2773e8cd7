"""Machine descriptions for 2PFA and 2QCFA.

A two-way probabilistic automaton (:class:`Pfa2`) carries a coin-tossing
transition table; a two-way automaton with quantum and classical states
(:class:`Qcfa2`) attaches a constant-size quantum register whose evolution
on each classical transition is either a unitary or a projective
measurement.  Both kinds are plain immutable data; the step functions at
the bottom give their single-transition operational semantics, and the
validators turn structural problems into reports instead of exceptions so
that deliberately broken machines can be inspected.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
import json

import numpy as np

from .core import (
    ENDMARKERS,
    LEFT_ENDMARKER,
    RIGHT_ENDMARKER,
    Measurement,
    StateVector,
    Tape,
    UnitaryMatrix,
    VALIDATION_TOL,
    apply_unitary,
    completeness_defect,
    measure,
    projector_defect,
    unitarity_defect,
)

MOVES = (-1, 0, 1)


class Outcome(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    TIMEOUT = "timeout"


# Validation issue categories.
CAT_DISTRIBUTION_SUM = "distribution-sum"
CAT_PROBABILITY_RANGE = "probability-range"
CAT_COIN_VALUES = "coin-values"
CAT_BOUNDARY = "boundary"
CAT_MISSING_ENTRY = "missing-entry"
CAT_HALTING_OVERLAP = "halting-overlap"
CAT_UNKNOWN_STATE = "unknown-state"
CAT_UNKNOWN_SYMBOL = "unknown-symbol"
CAT_INITIAL_STATE = "initial-state"
CAT_MOVE_RANGE = "move-range"
CAT_UNITARITY = "unitarity"
CAT_MEASUREMENT_COMPLETENESS = "measurement-completeness"
CAT_PROJECTOR = "projector"
CAT_OUTCOME_COVERAGE = "outcome-coverage"
CAT_DIMENSION = "dimension"


@dataclass(frozen=True)
class ValidationIssue:
    category: str
    message: str
    #: informational only; notes do not make a machine invalid
    note: bool = False

    def __str__(self) -> str:
        kind = "note" if self.note else "violation"
        return f"[{self.category}] {kind}: {self.message}"


def issue_errors(report: list["ValidationIssue"]) -> list["ValidationIssue"]:
    return [i for i in report if not i.note]


@dataclass(frozen=True)
class CoinDistribution:
    """Distribution over (next state, head move) with exact rational weights."""

    entries: tuple[tuple[tuple[str, int], Fraction], ...]

    def __post_init__(self):
        norm = tuple(
            ((str(s), int(mv)), Fraction(p)) for (s, mv), p in self.entries
        )
        object.__setattr__(self, "entries", norm)

    @classmethod
    def of(cls, mapping) -> "CoinDistribution":
        """Build from a {(state, move): probability} mapping (order-preserving)."""
        return cls(tuple(((s, mv), Fraction(p)) for (s, mv), p in mapping.items()))

    @classmethod
    def deterministic(cls, state: str, move: int) -> "CoinDistribution":
        return cls((((state, move), Fraction(1)),))

    @classmethod
    def fair(cls, first: tuple[str, int], second: tuple[str, int]) -> "CoinDistribution":
        half = Fraction(1, 2)
        return cls(((first, half), (second, half)))

    def total(self) -> Fraction:
        return sum((p for _, p in self.entries), Fraction(0))

    @cached_property
    def _cumulative(self) -> tuple[float, ...]:
        cum, acc = [], Fraction(0)
        for _, p in self.entries:
            acc += p
            cum.append(float(acc))
        return tuple(cum)

    def sample(self, u: float) -> tuple[str, int]:
        """Inverse-CDF draw in declared entry order; zero-weight entries never win."""
        chosen = None
        for i, ((_, p), cum) in enumerate(zip(self.entries, self._cumulative)):
            if p <= 0:
                continue
            chosen = i
            if u < cum:
                break
        if chosen is None:
            raise ValueError("cannot sample from an all-zero distribution")
        return self.entries[chosen][0]


@dataclass(frozen=True, eq=False)
class Pfa2:
    """Two-way probabilistic finite automaton.

    ``transitions`` maps (non-halting state, tape symbol) to a
    :class:`CoinDistribution`; tape symbols include the endmarkers.
    ``loop_marker`` optionally names the state whose entry marks the start
    of one iteration of the machine's outer loop (used for per-iteration
    statistics; it has no effect on the semantics).
    """

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    initial: str
    accept: frozenset[str]
    reject: frozenset[str]
    transitions: dict[tuple[str, str], CoinDistribution]
    loop_marker: str | None = None

    @property
    def tape_symbols(self) -> tuple[str, ...]:
        return self.alphabet + ENDMARKERS

    @property
    def halting(self) -> frozenset[str]:
        return self.accept | self.reject


@dataclass(frozen=True, eq=False)
class Qcfa2:
    """Two-way finite automaton with quantum and classical states.

    ``theta`` assigns each (non-halting state, symbol) pair a quantum
    action: a :class:`UnitaryMatrix` or a :class:`Measurement` over the
    register spanned by ``quantum_states``.  Unitary actions take the
    deterministic classical transition from ``delta_u``; measurement
    actions branch on the observed outcome through ``delta_m``.
    """

    quantum_states: tuple[str, ...]
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    initial_quantum: str
    initial: str
    accept: frozenset[str]
    reject: frozenset[str]
    theta: dict[tuple[str, str], UnitaryMatrix | Measurement]
    delta_u: dict[tuple[str, str], tuple[str, int]]
    delta_m: dict[tuple[str, str, str], tuple[str, int]]
    loop_marker: str | None = None

    @property
    def dim(self) -> int:
        return len(self.quantum_states)

    @property
    def tape_symbols(self) -> tuple[str, ...]:
        return self.alphabet + ENDMARKERS

    @property
    def halting(self) -> frozenset[str]:
        return self.accept | self.reject

    def initial_state_vector(self) -> StateVector:
        return StateVector.basis(self.dim, self.quantum_states.index(self.initial_quantum))


@dataclass
class Configuration:
    """Snapshot of a run: classical state, head position, quantum register."""

    state: str
    pos: int
    psi: StateVector | None = None


# ---------------------------------------------------------------------------
# Validation


def _check_classical_frame(m, report: list[ValidationIssue]) -> None:
    states = set(m.states)
    if m.initial not in states:
        report.append(ValidationIssue(CAT_INITIAL_STATE, f"initial state {m.initial!r} not in state set"))
    overlap = m.accept & m.reject
    if overlap:
        report.append(ValidationIssue(CAT_HALTING_OVERLAP, f"states {sorted(overlap)} are both accepting and rejecting"))
    for s in (m.accept | m.reject) - states:
        report.append(ValidationIssue(CAT_UNKNOWN_STATE, f"halting state {s!r} not in state set"))


def _check_move(state: str, symbol: str, move: int, report: list[ValidationIssue], positive: bool) -> None:
    if move not in MOVES:
        report.append(ValidationIssue(CAT_MOVE_RANGE, f"({state!r}, {symbol!r}) uses head move {move}"))
        return
    if not positive:
        return
    if symbol == LEFT_ENDMARKER and move == -1:
        report.append(ValidationIssue(CAT_BOUNDARY, f"({state!r}, {symbol!r}) can move left off the left endmarker"))
    if symbol == RIGHT_ENDMARKER and move == 1:
        report.append(ValidationIssue(CAT_BOUNDARY, f"({state!r}, {symbol!r}) can move right off the right endmarker"))


def validate_pfa(m: Pfa2) -> list[ValidationIssue]:
    """Structural validation; returns all problems found (empty = valid)."""
    report: list[ValidationIssue] = []
    _check_classical_frame(m, report)
    states = set(m.states)
    symbols = set(m.tape_symbols)
    coin_values = {Fraction(0), Fraction(1, 2), Fraction(1)}

    for s in m.states:
        if s in m.halting:
            continue
        for sym in m.tape_symbols:
            if (s, sym) not in m.transitions:
                report.append(ValidationIssue(CAT_MISSING_ENTRY, f"no transition for ({s!r}, {sym!r})"))

    for (s, sym), dist in m.transitions.items():
        if s not in states:
            report.append(ValidationIssue(CAT_UNKNOWN_STATE, f"transition from unknown state {s!r}"))
        if sym not in symbols:
            report.append(ValidationIssue(CAT_UNKNOWN_SYMBOL, f"transition on unknown symbol {sym!r}"))
        if dist.total() != 1:
            report.append(ValidationIssue(
                CAT_DISTRIBUTION_SUM,
                f"({s!r}, {sym!r}) probabilities sum to {dist.total()}, not 1"))
        for (s2, mv), p in dist.entries:
            if p < 0 or p > 1:
                report.append(ValidationIssue(CAT_PROBABILITY_RANGE, f"({s!r}, {sym!r}) -> {s2!r} has probability {p}"))
            elif p not in coin_values:
                report.append(ValidationIssue(
                    CAT_COIN_VALUES,
                    f"({s!r}, {sym!r}) -> {s2!r} uses probability {p} outside {{0, 1/2, 1}}",
                    note=True))
            if s2 not in states:
                report.append(ValidationIssue(CAT_UNKNOWN_STATE, f"({s!r}, {sym!r}) targets unknown state {s2!r}"))
            _check_move(s, sym, mv, report, positive=p > 0)
    return report


def validate_qcfa(m: Qcfa2, tol: float = VALIDATION_TOL) -> list[ValidationIssue]:
    """Structural + operator validation; returns all problems found."""
    report: list[ValidationIssue] = []
    _check_classical_frame(m, report)
    states = set(m.states)
    symbols = set(m.tape_symbols)

    if m.initial_quantum not in m.quantum_states:
        report.append(ValidationIssue(CAT_INITIAL_STATE, f"initial quantum state {m.initial_quantum!r} not in basis"))

    for s in m.states:
        if s in m.halting:
            continue
        for sym in m.tape_symbols:
            if (s, sym) not in m.theta:
                report.append(ValidationIssue(CAT_MISSING_ENTRY, f"no quantum action for ({s!r}, {sym!r})"))

    for (s, sym), action in m.theta.items():
        if s not in states:
            report.append(ValidationIssue(CAT_UNKNOWN_STATE, f"action from unknown state {s!r}"))
        if sym not in symbols:
            report.append(ValidationIssue(CAT_UNKNOWN_SYMBOL, f"action on unknown symbol {sym!r}"))
        if isinstance(action, UnitaryMatrix):
            if action.dim != m.dim:
                report.append(ValidationIssue(CAT_DIMENSION, f"({s!r}, {sym!r}) unitary has dimension {action.dim}, register has {m.dim}"))
            defect = unitarity_defect(action)
            if defect > tol:
                report.append(ValidationIssue(CAT_UNITARITY, f"({s!r}, {sym!r}) operator fails unitarity by {defect:.3g}"))
            if (s, sym) not in m.delta_u:
                report.append(ValidationIssue(CAT_MISSING_ENTRY, f"no classical transition for unitary action at ({s!r}, {sym!r})"))
            else:
                s2, mv = m.delta_u[(s, sym)]
                if s2 not in states:
                    report.append(ValidationIssue(CAT_UNKNOWN_STATE, f"({s!r}, {sym!r}) targets unknown state {s2!r}"))
                _check_move(s, sym, mv, report, positive=True)
        else:
            if action.dim != m.dim:
                report.append(ValidationIssue(CAT_DIMENSION, f"({s!r}, {sym!r}) measurement has dimension {action.dim}, register has {m.dim}"))
            defect = projector_defect(action)
            if defect > tol:
                report.append(ValidationIssue(CAT_PROJECTOR, f"({s!r}, {sym!r}) has a non-projector operator (defect {defect:.3g})"))
            defect = completeness_defect(action)
            if defect > tol:
                report.append(ValidationIssue(CAT_MEASUREMENT_COMPLETENESS, f"({s!r}, {sym!r}) projectors do not sum to identity (defect {defect:.3g})"))
            for outcome in action.outcomes:
                if (s, sym, outcome) not in m.delta_m:
                    report.append(ValidationIssue(CAT_OUTCOME_COVERAGE, f"({s!r}, {sym!r}) has no transition for outcome {outcome!r}"))
                else:
                    s2, mv = m.delta_m[(s, sym, outcome)]
                    if s2 not in states:
                        report.append(ValidationIssue(CAT_UNKNOWN_STATE, f"({s!r}, {sym!r}, {outcome!r}) targets unknown state {s2!r}"))
                    _check_move(s, sym, mv, report, positive=True)
    return report


# ---------------------------------------------------------------------------
# Single-step semantics


def _settle(m, s2: str, pos: int, move: int, tape: Tape):
    if s2 in m.accept:
        return Outcome.ACCEPT, None
    if s2 in m.reject:
        return Outcome.REJECT, None
    new_pos = pos + move
    if not 0 <= new_pos <= tape.last_pos:
        raise RuntimeError(f"head left the tape at position {new_pos} (invalid machine?)")
    return None, new_pos


def pfa_step(m: Pfa2, config: Configuration, tape: Tape, u: float):
    """One transition.  Returns the next Configuration or a halt Outcome."""
    dist = m.transitions[(config.state, tape.symbol(config.pos))]
    s2, mv = dist.sample(u)
    halted, new_pos = _settle(m, s2, config.pos, mv, tape)
    if halted is not None:
        return halted
    return Configuration(s2, new_pos)


def qcfa_step(m: Qcfa2, config: Configuration, tape: Tape, u: float):
    """One transition.  Returns the next Configuration or a halt Outcome.

    The draw ``u`` is consumed only when the action is a measurement.
    """
    sym = tape.symbol(config.pos)
    action = m.theta[(config.state, sym)]
    if isinstance(action, UnitaryMatrix):
        psi2 = apply_unitary(action, config.psi)
        s2, mv = m.delta_u[(config.state, sym)]
    else:
        outcome, psi2, _ = measure(action, config.psi, u)
        s2, mv = m.delta_m[(config.state, sym, outcome)]
    halted, new_pos = _settle(m, s2, config.pos, mv, tape)
    if halted is not None:
        return halted
    return Configuration(s2, new_pos, psi2)


# ---------------------------------------------------------------------------
# JSON serialization


def _fraction_to_json(p: Fraction) -> dict:
    return {"num": p.numerator, "den": p.denominator}


def _matrix_to_json(entries: np.ndarray) -> list[dict]:
    return [{"re": float(z.real), "im": float(z.imag)} for z in entries.reshape(-1)]


def _matrix_from_json(cells: list[dict], dim: int) -> np.ndarray:
    flat = np.array([complex(c["re"], c["im"]) for c in cells], dtype=np.complex128)
    if flat.size != dim * dim:
        raise ValueError(f"matrix payload has {flat.size} entries, expected {dim * dim}")
    return flat.reshape(dim, dim)


def machine_to_json(m: Pfa2 | Qcfa2) -> dict:
    """Serialize a machine to a JSON-compatible dict (stable field order)."""
    if isinstance(m, Pfa2):
        doc = {
            "kind": "pfa2",
            "states": list(m.states),
            "alphabet": list(m.alphabet),
            "initial": m.initial,
            "accept": sorted(m.accept),
            "reject": sorted(m.reject),
            "loop_marker": m.loop_marker,
            "transitions": [
                {
                    "state": s,
                    "symbol": sym,
                    "action": {
                        "type": "coin",
                        "entries": [
                            {"state": s2, "move": mv, "prob": _fraction_to_json(p)}
                            for (s2, mv), p in dist.entries
                        ],
                    },
                }
                for (s, sym), dist in m.transitions.items()
            ],
        }
        return doc
    if isinstance(m, Qcfa2):
        transitions = []
        for (s, sym), action in m.theta.items():
            if isinstance(action, UnitaryMatrix):
                s2, mv = m.delta_u[(s, sym)]
                act = {
                    "type": "unitary",
                    "matrix": _matrix_to_json(action.entries),
                    "next": {"state": s2, "move": mv},
                }
            else:
                act = {
                    "type": "measurement",
                    "projectors": [_matrix_to_json(p) for p in action.projectors],
                    "outcomes": list(action.outcomes),
                    "branches": {
                        o: {"state": m.delta_m[(s, sym, o)][0], "move": m.delta_m[(s, sym, o)][1]}
                        for o in action.outcomes
                        if (s, sym, o) in m.delta_m
                    },
                }
            transitions.append({"state": s, "symbol": sym, "action": act})
        return {
            "kind": "qcfa2",
            "quantum_states": list(m.quantum_states),
            "states": list(m.states),
            "alphabet": list(m.alphabet),
            "initial_quantum": m.initial_quantum,
            "initial": m.initial,
            "accept": sorted(m.accept),
            "reject": sorted(m.reject),
            "loop_marker": m.loop_marker,
            "transitions": transitions,
        }
    raise TypeError(f"not a machine: {type(m).__name__}")


def machine_from_json(doc: dict) -> Pfa2 | Qcfa2:
    kind = doc.get("kind")
    if kind == "pfa2":
        transitions = {}
        for rec in doc["transitions"]:
            entries = tuple(
                ((e["state"], int(e["move"])), Fraction(e["prob"]["num"], e["prob"]["den"]))
                for e in rec["action"]["entries"]
            )
            transitions[(rec["state"], rec["symbol"])] = CoinDistribution(entries)
        return Pfa2(
            states=tuple(doc["states"]),
            alphabet=tuple(doc["alphabet"]),
            initial=doc["initial"],
            accept=frozenset(doc["accept"]),
            reject=frozenset(doc["reject"]),
            transitions=transitions,
            loop_marker=doc.get("loop_marker"),
        )
    if kind == "qcfa2":
        dim = len(doc["quantum_states"])
        theta: dict = {}
        delta_u: dict = {}
        delta_m: dict = {}
        for rec in doc["transitions"]:
            key = (rec["state"], rec["symbol"])
            act = rec["action"]
            if act["type"] == "unitary":
                theta[key] = UnitaryMatrix(_matrix_from_json(act["matrix"], dim))
                delta_u[key] = (act["next"]["state"], int(act["next"]["move"]))
            elif act["type"] == "measurement":
                projs = tuple(_matrix_from_json(p, dim) for p in act["projectors"])
                theta[key] = Measurement(projs, tuple(act["outcomes"]))
                for o, branch in act["branches"].items():
                    delta_m[key + (o,)] = (branch["state"], int(branch["move"]))
            else:
                raise ValueError(f"unknown action type {act['type']!r}")
        return Qcfa2(
            quantum_states=tuple(doc["quantum_states"]),
            states=tuple(doc["states"]),
            alphabet=tuple(doc["alphabet"]),
            initial_quantum=doc["initial_quantum"],
            initial=doc["initial"],
            accept=frozenset(doc["accept"]),
            reject=frozenset(doc["reject"]),
            theta=theta,
            delta_u=delta_u,
            delta_m=delta_m,
            loop_marker=doc.get("loop_marker"),
        )
    raise ValueError(f"unknown machine kind {kind!r}")


def save_machine(m: Pfa2 | Qcfa2, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(machine_to_json(m), fh, indent=1)
        fh.write("\n")


def load_machine(path: str) -> Pfa2 | Qcfa2:
    with open(path, encoding="utf-8") as fh:
        return machine_from_json(json.load(fh))
