"""The center-marked length-equality language and its two recognizers.

``L_m = { x c y : x, y in {a,b}*, |x| = |y| }`` over the alphabet
{a, b, c}: exactly one ``c``, sitting exactly in the middle.  This module
holds the membership oracle, the closed-form probability formulas that
describe both recognizers, and builders for the concrete machines:

* a 2QCFA that accepts members with certainty and rejects non-members
  with probability at least ``1 - epsilon``, driven by a quantum rotation
  through the irrational angle ``sqrt(2)*pi`` per input letter;
* a 2PFA that recognizes the language with bounded error by comparing
  runs of fair coin flips counted against the two flank lengths.

Angle arithmetic note: ``d*sqrt(2) mod 2`` is computed in 256-bit integer
fixed point before any trig call.  In plain double precision the
fractional part of ``d*sqrt(2)`` loses one bit per doubling of ``d``,
which would wreck the rejection-probability lower bound for large ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    LEFT_ENDMARKER,
    RIGHT_ENDMARKER,
    Measurement,
    StateVector,
    UnitaryMatrix,
)
from .machines import CoinDistribution, Pfa2, Qcfa2

ALPHABET = ("a", "b", "c")
MARKER = "c"

#: The rotation angle sqrt(2)*pi (double-precision shadow of the exact value).
ROTATION_ANGLE = math.sqrt(2.0) * math.pi

# floor(sqrt(2) * 2**256): fixed-point sqrt(2) used for exact argument reduction.
_SQRT2_BITS = 256
_SQRT2_FIXED = math.isqrt(2 << (2 * _SQRT2_BITS))

QUANTUM_BASIS = ("q0", "q1", "q2", "q3")
HEAD, TAIL = "head", "tail"


@dataclass(frozen=True)
class LmParams:
    """Parameters of the two recognizers.

    For the 2QCFA, ``k`` is the number of extra coin flips per iteration
    and is derived from the error budget ``epsilon`` unless given
    directly.  For the 2PFA, ``k`` scales every flip count.
    """

    epsilon: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.k is None and self.epsilon is None:
            raise ValueError("need epsilon or k")
        if self.k is not None and self.epsilon is not None:
            raise ValueError("give epsilon or k, not both")
        if self.k is None:
            object.__setattr__(self, "k", k_for_epsilon(self.epsilon))
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def alpha(self) -> float:
        return ROTATION_ANGLE


def lm_membership(word: str) -> bool:
    """True iff the word is x c y with x, y over {a, b} and |x| = |y|."""
    for ch in word:
        if ch not in ALPHABET:
            raise ValueError(f"symbol {ch!r} outside alphabet {ALPHABET}")
    n = len(word)
    return n % 2 == 1 and word.count(MARKER) == 1 and word[n // 2] == MARKER


# ---------------------------------------------------------------------------
# Rotation closed forms


def _sqrt2_multiple_mod2(d: int) -> float:
    """``d * sqrt(2) mod 2`` with the fractional part exact to fixed-point width."""
    q = (d * _SQRT2_FIXED) % (2 << _SQRT2_BITS)
    return q / (1 << _SQRT2_BITS)


def _rotation_trig(d: int) -> tuple[float, float]:
    """(cos, sin) of ``d * sqrt(2) * pi`` via exact reduction mod 2*pi."""
    r = _sqrt2_multiple_mod2(d)
    return math.cos(math.pi * r), math.sin(math.pi * r)


def _rotation_matrix(c: float, s: float) -> UnitaryMatrix:
    return UnitaryMatrix(np.array(
        [[c, -s, 0, 0],
         [s, c, 0, 0],
         [0, 0, c, s],
         [0, 0, -s, c]], dtype=np.complex128))


def rotation_power(count: int) -> UnitaryMatrix:
    """The letter rotation applied ``count`` times, in closed form.

    One application rotates by ``sqrt(2)*pi`` inside span{q0,q1} and by the
    opposite orientation inside span{q2,q3}; ``count`` applications rotate
    by ``count`` times that angle.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    return _rotation_matrix(*_rotation_trig(count))


def letter_rotation() -> UnitaryMatrix:
    """The unitary applied on reading ``a`` or ``b`` during the scan."""
    return rotation_power(1)


def marker_swap() -> UnitaryMatrix:
    """The unitary applied on reading ``c``: swaps span{q0,q1} with span{q2,q3}."""
    return UnitaryMatrix(np.array(
        [[0, 0, 1, 0],
         [0, 0, 0, 1],
         [1, 0, 0, 0],
         [0, 1, 0, 0]], dtype=np.complex128))


def scan_unitary(first: int, second: int) -> UnitaryMatrix:
    """Closed form of rotation^second . marker_swap . rotation^first.

    This is the total unitary of one scan over ``a^first c a^second``; it
    depends only on ``first - second``.
    """
    if first < 0 or second < 0:
        raise ValueError("flank lengths must be >= 0")
    c, s = _rotation_trig(first - second)
    return UnitaryMatrix(np.array(
        [[0, 0, c, s],
         [0, 0, -s, c],
         [c, -s, 0, 0],
         [s, c, 0, 0]], dtype=np.complex128))


def post_scan_state(n: int, m: int) -> StateVector:
    """Quantum state after scanning ``a^n c a^m`` starting from q0.

    Equals ``cos((n-m)*angle) |q2> + sin((n-m)*angle) |q3>``; for n = m this
    is exactly |q2>.
    """
    c, s = _rotation_trig(n - m)
    return StateVector(np.array([0, 0, c, s], dtype=np.complex128))


def mismatch_reject_prob(d: int) -> float:
    """Probability that the post-scan measurement rejects, given flank gap d.

    ``sin²(sqrt(2) * d * pi)``; exactly 0 for d = 0 and strictly positive
    otherwise because ``sqrt(2) * d`` is never an integer.  Computed from
    |d| so the result is bitwise symmetric in the sign of the gap.
    """
    if d == 0:
        return 0.0
    _, s = _rotation_trig(abs(d))
    return s * s


def mismatch_reject_floor(d: int) -> float:
    """Lower bound 1/(2d²+1) on :func:`mismatch_reject_prob` for d != 0."""
    if d == 0:
        raise ValueError("the floor applies to nonzero flank gaps only")
    return 1.0 / (2 * d * d + 1)


def coin_flip_gadget() -> tuple[UnitaryMatrix, Measurement]:
    """Fair coin from the 4-dim register: one unitary, one 2-outcome measurement.

    The unitary applies the Hadamard-type rotation inside span{q0,q1} and
    inside span{q2,q3}; the measurement distinguishes {q0,q2} ("head")
    from {q1,q3} ("tail").  From any basis state the outcomes are exactly
    (1/2, 1/2) and the collapsed state is again a basis state.
    """
    h = 1.0 / math.sqrt(2.0)
    u = UnitaryMatrix(np.array(
        [[h, h, 0, 0],
         [h, -h, 0, 0],
         [0, 0, h, h],
         [0, 0, h, -h]], dtype=np.complex128))
    p_head = np.diag([1.0, 0.0, 1.0, 0.0]).astype(np.complex128)
    p_tail = np.diag([0.0, 1.0, 0.0, 1.0]).astype(np.complex128)
    meas = Measurement((p_head, p_tail), (HEAD, TAIL))
    return u, meas


# ---------------------------------------------------------------------------
# Probability formulas


def walk_right_absorption(n_positions: int) -> float:
    """Right-absorption probability of the symmetric walk from position 1.

    Walk on 0..N with absorbing barriers at both ends; from position 1 the
    probability of reaching N is exactly 1/N.
    """
    if n_positions < 2:
        raise ValueError("walk needs at least 2 positions")
    return 1.0 / n_positions


def iteration_accept_prob(n: int, m: int, k: int) -> float:
    """Per-iteration acceptance of the 2QCFA on a^n c a^m: 2^-k / (n+m+2)²."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return (1.0 / (n + m + 2)) ** 2 * 2.0 ** (-k)


def k_for_epsilon(epsilon: float) -> int:
    """Smallest flip count k = 1 + ceil(log2(1/epsilon)) with epsilon >= 2^-(k-1).

    Exact powers of two map to the integer exponent: epsilon = 0.25 gives
    k = 3.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must be in (0, 1/2), got {epsilon!r}")
    c = math.ceil(math.log2(1.0 / epsilon))
    while 2.0 ** (-c) > epsilon:
        c += 1
    while c > 1 and 2.0 ** (-(c - 1)) <= epsilon:
        c -= 1
    k = 1 + c
    assert epsilon >= 2.0 ** (-(k - 1))
    return k


def member_accept_after_reps(n: int, k: int, reps: int) -> float:
    """Acceptance after ``reps`` iterations on a member a^n c a^n."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    per = Fraction(1, 2**k * (2 * n + 2) ** 2)
    return float(1 - (1 - per) ** reps)


@dataclass(frozen=True)
class NonmemberRejectBounds:
    """Bounds on the 2QCFA's behaviour on a non-member a^n c a^m."""

    p_reject_floor: float      # per-iteration rejection, at least this
    p_accept_ceiling: float    # per-iteration acceptance, at most this
    total_reject_floor: float  # overall rejection composed from the two
    final_floor: float         # the coarse closing bound 1/(1+epsilon)


def nonmember_reject_bounds(n: int, m: int, epsilon: float) -> NonmemberRejectBounds:
    """Per-iteration and overall rejection bounds for flanks n != m."""
    if n == m:
        raise ValueError("flanks must differ on a non-member")
    k = k_for_epsilon(epsilon)
    p_r = mismatch_reject_floor(n - m)
    p_a = epsilon / (2.0 * (n + m + 2) ** 2)
    assert 2.0 ** (-k) <= epsilon / 2.0
    total = two_outcome_series_reject_first(p_a, p_r)
    return NonmemberRejectBounds(p_r, p_a, total, 1.0 / (1.0 + epsilon))


def two_outcome_series_reject_first(p_a, p_r):
    """Closed form of sum_i (1-p_a)^i (1-p_r)^i p_r = p_r / (p_a + p_r - p_a p_r)."""
    if p_a == 0 and p_r == 0:
        raise ValueError("series undefined for p_a = p_r = 0")
    return p_r / (p_a + p_r - p_a * p_r)


def pfa_iteration_probs(n: int, m: int, k: int) -> tuple[Fraction, Fraction]:
    """Exact per-iteration (P_reject, P_accept) of the 2PFA on a^n c a^m.

    Rejection needs k(2n+2) (or, on the other branch, k(2m+2)) straight
    heads; acceptance needs surviving that and then k*l straight heads,
    l = n + m + 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    l = n + m + 1
    if n == m:
        p_r = Fraction(1, 2 ** (k * (2 * n + 2)))
    else:
        p_r = Fraction(1, 2 ** (k * (2 * n + 2) + 1)) + Fraction(1, 2 ** (k * (2 * m + 2) + 1))
    p_a = (1 - p_r) * Fraction(1, 2 ** (k * l))
    return p_r, p_a


def pfa_member_accept_floor(k: int) -> Fraction:
    """The quoted member-acceptance floor 1/(1 + 2^-(k+2)).

    Note: the derivation behind this constant contains an exponent slip;
    the floor actually achieved by the machine is 1/(1 + 2^(2-k)).  The
    quoted value is kept here because downstream checks are stated
    against it; see ``pfa_member_accept_floor_corrected``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(1) / (1 + Fraction(1, 2 ** (k + 2)))


def pfa_member_accept_floor_corrected(k: int) -> Fraction:
    """Member-acceptance floor that the machine actually satisfies.

    Per iteration P_a >= 2^-(kl+1) and P_r = 2^-k(l+1), so the overall
    acceptance P_a/(P_a + P_r) is at least 1/(1 + 2^(2-k)).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(1) / (1 + Fraction(2**2, 2**k))


def pfa_nonmember_reject_floor(k: int) -> Fraction:
    """Non-member rejection floor 1/(2^-(k-1) + 1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(1) / (Fraction(1, 2 ** (k - 1)) + 1)


# ---------------------------------------------------------------------------
# The 2QCFA recognizer

# Classical state names.
_FORM0 = "form0"          # scanning for the marker, none seen yet
_FORM1 = "form1"          # one marker seen
_REWIND = "rewind"        # back to the left end, register still q0
_SCAN = "scan"            # the rotation scan (one entry per iteration)
_W1_REWIND = "walk1-rewind"
_W1_FLIP = "walk1-flip"
_W1_MEAS = "walk1-meas"
_W2_REWIND = "walk2-rewind"
_W2_FLIP = "walk2-flip"
_W2_MEAS = "walk2-meas"
_RESTART = "restart"      # back to the left end, register known q3
_ACC = "acc"
_REJ = "rej"


def build_lm_qcfa(epsilon: float | None = None, *, k: int | None = None) -> Qcfa2:
    """Build the 2QCFA recognizer for the center-marked language.

    Pass ``epsilon`` to derive the flip count ``k`` (one-sided error at
    most epsilon), or pass ``k`` directly for experiments that fix the
    per-iteration acceptance 2^-k/(l+1)² instead.

    Structure of one iteration (entered at state ``scan``, position 1,
    register q0): rotate across the input and measure at the right end,
    rejecting unless the register collapsed to q2; then run two symmetric
    random walks from position 1 (each coin flip is one gadget unitary
    plus one gadget measurement); if both walks exit right, flip k more
    coins at the right end and accept on all heads.  Any failed walk or
    tail sends the head left and restarts the scan, re-preparing the
    register from its then-known basis state by a permutation unitary.
    """
    params = LmParams(epsilon=epsilon, k=k)
    k = params.k

    ident = UnitaryMatrix.identity(4)
    rot = letter_rotation()
    swap = marker_swap()
    coin_u, coin_m = coin_flip_gadget()
    basis_meas = Measurement.computational_basis(QUANTUM_BASIS)
    # Permutation sending q3 back to q0 (and q1 <-> q2): re-preparation
    # after a tail, where the register is known to sit in q3.
    reset3 = UnitaryMatrix(np.array(
        [[0, 0, 0, 1],
         [0, 0, 1, 0],
         [0, 1, 0, 0],
         [1, 0, 0, 0]], dtype=np.complex128))

    flips = [f"final-flip{i}" for i in range(k)]
    metas = [f"final-meas{i}" for i in range(k)]
    states = (
        _FORM0, _FORM1, _REWIND, _SCAN,
        _W1_REWIND, _W1_FLIP, _W1_MEAS,
        _W2_REWIND, _W2_FLIP, _W2_MEAS,
        *[s for pair in zip(flips, metas) for s in pair],
        _RESTART, _ACC, _REJ,
    )

    theta: dict = {}
    delta_u: dict = {}
    delta_m: dict = {}

    def uni(state, symbol, op, nxt, move):
        theta[(state, symbol)] = op
        delta_u[(state, symbol)] = (nxt, move)

    def mea(state, symbol, op, branches):
        theta[(state, symbol)] = op
        for outcome, (nxt, move) in branches.items():
            delta_m[(state, symbol, outcome)] = (nxt, move)

    letters = ("a", "b")
    lm, rm = LEFT_ENDMARKER, RIGHT_ENDMARKER

    # Marker-count pass: reject unless exactly one marker.
    uni(_FORM0, lm, ident, _FORM0, 1)
    for ch in letters:
        uni(_FORM0, ch, ident, _FORM0, 1)
    uni(_FORM0, MARKER, ident, _FORM1, 1)
    uni(_FORM0, rm, ident, _REJ, 0)
    for ch in letters:
        uni(_FORM1, ch, ident, _FORM1, 1)
    uni(_FORM1, MARKER, ident, _REJ, 0)
    uni(_FORM1, rm, ident, _REWIND, -1)
    uni(_FORM1, lm, ident, _REJ, 0)  # unreachable

    # Rewind to the left end with the register untouched (still q0).
    for ch in (*letters, MARKER):
        uni(_REWIND, ch, ident, _REWIND, -1)
    uni(_REWIND, lm, ident, _SCAN, 1)
    uni(_REWIND, rm, ident, _REJ, 0)  # unreachable

    # The rotation scan; measurement at the right end.
    for ch in letters:
        uni(_SCAN, ch, rot, _SCAN, 1)
    uni(_SCAN, MARKER, swap, _SCAN, 1)
    mea(_SCAN, rm, basis_meas, {
        "q2": (_W1_REWIND, -1),
        "q0": (_REJ, 0), "q1": (_REJ, 0), "q3": (_REJ, 0),
    })
    uni(_SCAN, lm, ident, _REJ, 0)  # unreachable

    # Two random walks.  A flip is gadget unitary then gadget measurement;
    # the register alternates between q2 (head) and q3 (tail), so the
    # classical control always knows it.
    for rewind, flip, meas_state, on_success in (
        (_W1_REWIND, _W1_FLIP, _W1_MEAS, (_W2_REWIND, -1)),
        (_W2_REWIND, _W2_FLIP, _W2_MEAS, (flips[0], 0)),
    ):
        for ch in (*letters, MARKER):
            uni(rewind, ch, ident, rewind, -1)
        uni(rewind, lm, ident, flip, 1)
        uni(rewind, rm, ident, _REJ, 0)  # unreachable
        for ch in (*letters, MARKER):
            uni(flip, ch, coin_u, meas_state, 0)
            mea(meas_state, ch, coin_m, {HEAD: (flip, 1), TAIL: (flip, -1)})
        uni(flip, lm, reset3, _SCAN, 1)          # walk exited left: restart
        uni(flip, rm, ident, *on_success)        # walk exited right
        uni(meas_state, lm, ident, _REJ, 0)      # unreachable
        uni(meas_state, rm, ident, _REJ, 0)      # unreachable

    # Final k coin flips at the right end; accept on straight heads.
    for i in range(k):
        uni(flips[i], rm, coin_u, metas[i], 0)
        on_head = (_ACC, 0) if i == k - 1 else (flips[i + 1], 0)
        mea(metas[i], rm, coin_m, {HEAD: on_head, TAIL: (_RESTART, -1)})
        for ch in (lm, *letters, MARKER):  # unreachable
            uni(flips[i], ch, ident, _REJ, 0)
            uni(metas[i], ch, ident, _REJ, 0)

    # Restart pass: head to the left end with the register in q3.
    for ch in (*letters, MARKER):
        uni(_RESTART, ch, ident, _RESTART, -1)
    uni(_RESTART, lm, reset3, _SCAN, 1)
    uni(_RESTART, rm, ident, _REJ, 0)  # unreachable

    return Qcfa2(
        quantum_states=QUANTUM_BASIS,
        states=states,
        alphabet=ALPHABET,
        initial_quantum="q0",
        initial=_FORM0,
        accept=frozenset({_ACC}),
        reject=frozenset({_REJ}),
        theta=theta,
        delta_u=delta_u,
        delta_m=delta_m,
        loop_marker=_SCAN,
    )


# ---------------------------------------------------------------------------
# The 2PFA recognizer

_P_ACC = "acc"
_P_REJ = "rej"
_TO_START = "to-start"
_FIND_C = "find-c"
_SW_SETUP = "sweep-setup"

#: Loop entry of the built 2PFA: state and head position at the start of
#: every iteration (the marker-search state, one square right of the left
#: endmarker).
PFA_LOOP_ENTRY = (_FIND_C, 1)


def build_lm_pfa(k: int) -> Pfa2:
    """Build the 2PFA recognizer for the center-marked language.

    The deterministic preamble rejects inputs of even length or without
    exactly one marker.  Each iteration then: walks the head to the
    marker; picks a side by a fair coin; performs exactly k(2n+2) (left
    side) or k(2m+2) (right side) flips as k head round trips between the
    marker and the chosen endmarker, one flip per head move, rejecting if
    every flip came up heads; then performs exactly k*l flips as k
    one-way sweeps across the input, accepting if every flip came up
    heads.  Flip counts are exact: trips and sweeps run to completion
    even after a tail, with a single all-heads-so-far bit.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    def pre(parity: int, count: int) -> str:
        return f"pre-p{parity}c{count}"

    def trip(side: str, t: int, leg: str, bit: str) -> str:
        return f"{side}{t}-{leg}-{bit}"

    def sweep(j: int, leg: str, bit: str) -> str:
        return f"sweep{j}-{leg}-{bit}"

    states = [pre(p, c) for p in (0, 1) for c in (0, 1, 2)]
    states += [_TO_START, _FIND_C, _SW_SETUP]
    for side in ("left", "right"):
        for t in range(1, k + 1):
            for leg in ("out", "back"):
                for bit in ("y", "n"):
                    states.append(trip(side, t, leg, bit))
    for j in range(1, k + 1):
        for leg in ("fwd", "bwd"):
            for bit in ("y", "n"):
                states.append(sweep(j, leg, bit))
    states += [_P_ACC, _P_REJ]

    tr: dict[tuple[str, str], CoinDistribution] = {}
    det = CoinDistribution.deterministic
    letters = ("a", "b")
    lm, rm = LEFT_ENDMARKER, RIGHT_ENDMARKER

    def flip(state: str, symbol: str, stay: str, spoiled: str, move: int):
        """A coin flip paired with one head move; tails clears the bit."""
        if stay == spoiled:
            tr[(state, symbol)] = det(spoiled, move)
        else:
            tr[(state, symbol)] = CoinDistribution.fair((stay, move), (spoiled, move))

    # Preamble: one left-to-right pass tracking length parity and marker count.
    for p in (0, 1):
        for c in (0, 1, 2):
            s = pre(p, c)
            tr[(s, lm)] = det(s, 1)
            for ch in letters:
                tr[(s, ch)] = det(pre(1 - p, c), 1)
            tr[(s, MARKER)] = det(pre(1 - p, min(c + 1, 2)), 1)
            tr[(s, rm)] = det(_TO_START, -1) if (p, c) == (1, 1) else det(_P_REJ, 0)

    # Iteration entry: rewind, then search right for the marker.
    for ch in (*letters, MARKER):
        tr[(_TO_START, ch)] = det(_TO_START, -1)
    tr[(_TO_START, lm)] = det(_FIND_C, 1)
    tr[(_TO_START, rm)] = det(_P_REJ, 0)  # unreachable
    for ch in letters:
        tr[(_FIND_C, ch)] = det(_FIND_C, 1)
    tr[(_FIND_C, MARKER)] = CoinDistribution.fair(
        (trip("left", 1, "out", "y"), 0), (trip("right", 1, "out", "y"), 0))
    tr[(_FIND_C, rm)] = det(_P_REJ, 0)    # no marker present
    tr[(_FIND_C, lm)] = det(_P_REJ, 0)    # unreachable

    # Side trips: k round trips between the marker and one endmarker,
    # one flip per head move (2n+2 or 2m+2 moves per trip).
    for side, out_mv, turn_sym, far_sym in (
        ("left", -1, lm, rm),
        ("right", 1, rm, lm),
    ):
        for t in range(1, k + 1):
            for bit in ("y", "n"):
                out_s, back_s = trip(side, t, "out", bit), trip(side, t, "back", bit)
                out_spoiled = trip(side, t, "out", "n")
                back_spoiled = trip(side, t, "back", "n")
                for ch in (*letters, MARKER):
                    flip(out_s, ch, out_s, out_spoiled, out_mv)
                flip(out_s, turn_sym, back_s, back_spoiled, -out_mv)
                tr[(out_s, far_sym)] = det(_P_REJ, 0)  # unreachable
                for ch in letters:
                    flip(back_s, ch, back_s, back_spoiled, -out_mv)
                # Arrival back at the marker: trip done, no flip here.
                if t < k:
                    tr[(back_s, MARKER)] = det(trip(side, t + 1, "out", bit), 0)
                elif bit == "y":
                    tr[(back_s, MARKER)] = det(_P_REJ, 0)  # every flip was heads
                else:
                    tr[(back_s, MARKER)] = det(_SW_SETUP, -1)
                tr[(back_s, turn_sym)] = det(_P_REJ, 0)  # unreachable
                tr[(back_s, far_sym)] = det(_P_REJ, 0)   # unreachable

    # Move from the marker to the left end, then k sweeps of l flips each.
    for ch in letters:
        tr[(_SW_SETUP, ch)] = det(_SW_SETUP, -1)
    tr[(_SW_SETUP, lm)] = det(sweep(1, "fwd", "y"), 1)
    tr[(_SW_SETUP, MARKER)] = det(_P_REJ, 0)  # unreachable
    tr[(_SW_SETUP, rm)] = det(_P_REJ, 0)      # unreachable

    for j in range(1, k + 1):
        for bit in ("y", "n"):
            fwd, bwd = sweep(j, "fwd", bit), sweep(j, "bwd", bit)
            for ch in (*letters, MARKER):
                flip(fwd, ch, fwd, sweep(j, "fwd", "n"), 1)
                flip(bwd, ch, bwd, sweep(j, "bwd", "n"), -1)
            if j < k:
                tr[(fwd, rm)] = det(sweep(j + 1, "bwd", bit), -1)
                tr[(bwd, lm)] = det(sweep(j + 1, "fwd", bit), 1)
            else:
                tr[(fwd, rm)] = det(_P_ACC, 0) if bit == "y" else det(_TO_START, -1)
                tr[(bwd, lm)] = det(_P_ACC, 0) if bit == "y" else det(_FIND_C, 1)
            tr[(fwd, lm)] = det(_P_REJ, 0)  # unreachable
            tr[(bwd, rm)] = det(_P_REJ, 0)  # unreachable

    return Pfa2(
        states=tuple(states),
        alphabet=ALPHABET,
        initial=pre(0, 0),
        accept=frozenset({_P_ACC}),
        reject=frozenset({_P_REJ}),
        transitions=tr,
        loop_marker=_FIND_C,
    )


def pfa_first_iteration_probs(machine: Pfa2, word: str) -> tuple[Fraction, Fraction]:
    """Exact (reject, accept) probability of one iteration of the built 2PFA.

    Cuts the configuration chain at the loop entry (state ``find-c`` at
    position 1, where every iteration begins) and solves the one-pass
    absorption in rational arithmetic.  Mass that survives to the next
    entry shows up as divergence of the cut chain and is discarded.
    """
    from . import exact

    chain = exact.build_config_chain(machine, word, initial=PFA_LOOP_ENTRY)
    entry = chain.index(PFA_LOOP_ENTRY)
    after_one = exact.one_step_mass(chain, entry)
    cut = exact.freeze_configs(chain, lambda c: c == PFA_LOOP_ENTRY)
    res = exact.absorption_probs(cut, exact=True, initial_mass=after_one)
    return res.p_reject, res.p_accept


# ---------------------------------------------------------------------------
# Formula report plumbing (used by the CLI)


def formula_report(d: int | None = None, n: int | None = None, m: int | None = None,
                   k: int | None = None, epsilon: float | None = None) -> list[dict]:
    """Evaluate every formula the given parameters allow.

    Returns records {name, equation_tag, value}; the tag is a stable
    identifier of the formula instantiated.
    """
    out: list[dict] = []

    def rec(name: str, tag: str, value) -> None:
        out.append({"name": name, "equation_tag": tag, "value": value})

    if d is not None:
        rec("mismatch_reject_prob", "scan-mismatch-sin2", mismatch_reject_prob(d))
        if d != 0:
            rec("mismatch_reject_floor", "scan-mismatch-floor", mismatch_reject_floor(d))
    if n is not None and m is not None and k is not None:
        rec("iteration_accept_prob", "walk-iteration-accept", iteration_accept_prob(n, m, k))
        p_r, p_a = pfa_iteration_probs(n, m, k)
        rec("pfa_iteration_reject", "pfa-iteration-reject", float(p_r))
        rec("pfa_iteration_accept", "pfa-iteration-accept", float(p_a))
    if n is not None and m is not None and epsilon is not None and n != m:
        b = nonmember_reject_bounds(n, m, epsilon)
        rec("nonmember_reject_floor", "qcfa-nonmember-reject-chain", b.total_reject_floor)
        rec("nonmember_final_floor", "qcfa-nonmember-final-floor", b.final_floor)
    if epsilon is not None:
        rec("k_for_epsilon", "flip-count", k_for_epsilon(epsilon))
    if k is not None:
        rec("pfa_member_accept_floor", "pfa-member-accept-floor", float(pfa_member_accept_floor(k)))
        rec("pfa_nonmember_reject_floor", "pfa-nonmember-reject-floor", float(pfa_nonmember_reject_floor(k)))
    if not out:
        raise ValueError("no formula matches the given parameters")
    return out
