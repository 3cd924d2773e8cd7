"""Shared linear-algebra primitives, the tape model, and measurement semantics.

Everything in this module is a plain value: state vectors, unitaries,
projective measurements and tapes are immutable once built, and the
operations on them are pure functions.  Constructors only enforce cheap
structural facts (shape, finiteness, unit norm for state vectors); whether
a matrix really is unitary or a projector family really resolves the
identity is the business of the machine validators, which use the
``*_defect`` helpers below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEFT_ENDMARKER = "¢"  # ¢
RIGHT_ENDMARKER = "$"
ENDMARKERS = (LEFT_ENDMARKER, RIGHT_ENDMARKER)

#: Default tolerance for validation checks (unitarity, completeness, norms).
VALIDATION_TOL = 1e-9
#: Default tolerance for identities that should hold to rounding error.
EXACT_TOL = 1e-12


class MassLossError(RuntimeError):
    """Raised when every measurement outcome has numerically zero probability."""


def _as_complex_array(values, shape_name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.complex128)
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError(f"{shape_name} contains a non-finite entry")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """A normalized quantum state over an ordered basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _as_complex_array(self.amplitudes, "state vector")
        if amps.ndim != 1 or amps.size == 0:
            raise ValueError("state vector must be a non-empty 1-d array")
        norm_sq = float(np.sum(amps.real**2 + amps.imag**2))
        if abs(norm_sq - 1.0) > VALIDATION_TOL:
            raise ValueError(f"state vector has squared norm {norm_sq!r}, expected 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        amps = np.zeros(dim, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps)

    def overlap_sq(self, other: "StateVector") -> float:
        """Squared inner product |<other|self>|²."""
        return float(abs(np.vdot(other.amplitudes, self.amplitudes)) ** 2)


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """A square operator.  Unitarity is checked by validators, not here."""

    entries: np.ndarray

    def __post_init__(self):
        mat = _as_complex_array(self.entries, "matrix")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
            raise ValueError("matrix must be square and non-empty")
        object.__setattr__(self, "entries", mat)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "UnitaryMatrix":
        return cls(np.eye(dim, dtype=np.complex128))


@dataclass(frozen=True, eq=False)
class Measurement:
    """A projective measurement: one projector per outcome label."""

    projectors: tuple[np.ndarray, ...]
    outcomes: tuple[str, ...]

    def __post_init__(self):
        projs = tuple(_as_complex_array(p, "projector") for p in self.projectors)
        outcomes = tuple(str(o) for o in self.outcomes)
        if len(projs) == 0:
            raise ValueError("measurement needs at least one projector")
        if len(projs) != len(outcomes):
            raise ValueError("projector and outcome counts differ")
        if len(set(outcomes)) != len(outcomes):
            raise ValueError("measurement outcome labels must be distinct")
        dim = projs[0].shape[0]
        for p in projs:
            if p.ndim != 2 or p.shape != (dim, dim):
                raise ValueError("projectors must be square matrices of equal dimension")
        object.__setattr__(self, "projectors", projs)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    @classmethod
    def computational_basis(cls, labels: tuple[str, ...]) -> "Measurement":
        dim = len(labels)
        projs = []
        for i in range(dim):
            p = np.zeros((dim, dim), dtype=np.complex128)
            p[i, i] = 1.0
            projs.append(p)
        return cls(tuple(projs), labels)


def unitarity_defect(u: UnitaryMatrix) -> float:
    """Max-entry distance of U†U from the identity."""
    mat = u.entries
    return float(np.max(np.abs(mat.conj().T @ mat - np.eye(u.dim))))


def completeness_defect(m: Measurement) -> float:
    """Max-entry distance of the projector sum from the identity."""
    total = sum(m.projectors)
    return float(np.max(np.abs(total - np.eye(m.dim))))


def projector_defect(m: Measurement) -> float:
    """Max over projectors of the distance from P = P† and P = P²."""
    worst = 0.0
    for p in m.projectors:
        worst = max(worst, float(np.max(np.abs(p - p.conj().T))))
        worst = max(worst, float(np.max(np.abs(p @ p - p))))
    return worst


def apply_unitary(u: UnitaryMatrix, psi: StateVector) -> StateVector:
    if u.dim != psi.dim:
        raise ValueError(f"dimension mismatch: operator is {u.dim}-dim, state is {psi.dim}-dim")
    return StateVector(u.entries @ psi.amplitudes)


def _branch_weights(m: Measurement, psi: StateVector) -> list[tuple[np.ndarray, float]]:
    out = []
    for p in m.projectors:
        phi = p @ psi.amplitudes
        out.append((phi, float(np.sum(phi.real**2 + phi.imag**2))))
    return out


def outcome_distribution(m: Measurement, psi: StateVector) -> list[tuple[str, float]]:
    """Outcome probabilities <psi|P_i|psi> in declared projector order."""
    if m.dim != psi.dim:
        raise ValueError(f"dimension mismatch: measurement is {m.dim}-dim, state is {psi.dim}-dim")
    return [(o, w) for o, (_, w) in zip(m.outcomes, _branch_weights(m, psi))]


def measure(m: Measurement, psi: StateVector, u: float) -> tuple[str, StateVector, float]:
    """Sample one outcome by inverse CDF over the declared projector order.

    Returns ``(outcome, collapsed state, outcome probability)``.  The draw
    ``u`` must lie in [0, 1); ties at projector boundaries resolve to the
    later projector, and outcomes whose probability is exactly zero are
    never selected.
    """
    if m.dim != psi.dim:
        raise ValueError(f"dimension mismatch: measurement is {m.dim}-dim, state is {psi.dim}-dim")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"uniform draw {u!r} outside [0, 1)")
    branches = _branch_weights(m, psi)
    total = sum(w for _, w in branches)
    if total <= VALIDATION_TOL:
        raise MassLossError("all measurement outcomes have numerically zero probability")
    chosen = None
    cum = 0.0
    for i, (_, w) in enumerate(branches):
        if w <= 0.0:
            continue
        chosen = i
        cum += w
        if u < cum:
            break
    phi, w = branches[chosen]
    return m.outcomes[chosen], StateVector(phi / np.sqrt(w)), w


@dataclass(frozen=True)
class Tape:
    """Read-only input tape with implicit endmarkers at both ends.

    Position 0 holds the left endmarker, position ``len(input)+1`` the
    right endmarker, and positions in between hold the input symbols.
    """

    input: str

    def __post_init__(self):
        for ch in self.input:
            if ch in ENDMARKERS:
                raise ValueError(f"input may not contain the endmarker {ch!r}")

    def __len__(self) -> int:
        return len(self.input)

    @property
    def last_pos(self) -> int:
        return len(self.input) + 1

    def symbol(self, pos: int) -> str:
        if pos == 0:
            return LEFT_ENDMARKER
        if pos == self.last_pos:
            return RIGHT_ENDMARKER
        if 0 < pos < self.last_pos:
            return self.input[pos - 1]
        raise ValueError(f"position {pos} outside tape [0, {self.last_pos}]")


def tape_symbol(tape: Tape, pos: int) -> str:
    return tape.symbol(pos)
