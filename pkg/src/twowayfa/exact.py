"""Deterministic probability analysis.

For a 2PFA on a fixed input the run is a finite absorbing Markov chain
over (state, head position) configurations; :func:`absorption_probs`
solves the linear absorption system, with an exact-rational mode for
small chains.  For a 2QCFA the classical-quantum joint state is pushed
forward synchronously as a map from configuration to unnormalized density
operator (:func:`qcfa_forward`), which keeps the step map linear and mass
conserving across measurement branching.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Tape, UnitaryMatrix
from .machines import Pfa2, Qcfa2

#: Row targets for the two absorbing sinks.
ACCEPT_SINK = -1
REJECT_SINK = -2

#: p_diverge above this disables the expected-steps solve.
DIVERGENCE_TOL = 1e-12

#: Chains at most this large use the dense solver.
DENSE_LIMIT = 5000

Config = tuple[str, int]


@dataclass(frozen=True)
class ConfigChain:
    """Absorbing Markov chain over machine configurations for one input.

    ``rows[i]`` lists ``(target, probability)`` with exact rational
    probabilities; targets are transient config indices or the
    ``ACCEPT_SINK`` / ``REJECT_SINK`` codes.  The two sinks conceptually
    self-loop.  ``initial`` may itself be a sink code when the machine
    starts in a halting state.
    """

    configs: tuple[Config, ...]
    rows: tuple[tuple[tuple[int, Fraction], ...], ...]
    initial: int

    def __post_init__(self):
        for row in self.rows:
            total = sum((p for _, p in row), Fraction(0))
            if total != 1:
                raise ValueError(f"chain row sums to {total}, not 1")

    @property
    def size(self) -> int:
        return len(self.configs)

    def index(self, config: Config) -> int:
        return self.configs.index(config)


@dataclass(frozen=True)
class AbsorptionResult:
    """Absorption mass split and expected steps (None when diverging)."""

    p_accept: float | Fraction
    p_reject: float | Fraction
    p_diverge: float | Fraction
    expected_steps: float | Fraction | None


def build_config_chain(m: Pfa2, word: str, initial: Config | None = None) -> ConfigChain:
    """Enumerate the reachable configuration chain of ``m`` on ``word``.

    Zero-probability entries are dropped; duplicate targets within one
    distribution are merged.  At most ``|states| * (len(word)+2)``
    configurations are produced.
    """
    tape = Tape(word)
    if initial is None:
        initial = (m.initial, 0)
    if initial[0] in m.accept:
        return ConfigChain((), (), ACCEPT_SINK)
    if initial[0] in m.reject:
        return ConfigChain((), (), REJECT_SINK)

    configs: list[Config] = [initial]
    index: dict[Config, int] = {initial: 0}
    rows: list[tuple[tuple[int, Fraction], ...]] = []
    frontier = [initial]
    while frontier:
        next_frontier: list[Config] = []
        for config in frontier:
            s, pos = config
            dist = m.transitions[(s, tape.symbol(pos))]
            merged: dict[int, Fraction] = {}
            for (s2, mv), p in dist.entries:
                if p == 0:
                    continue
                if s2 in m.accept:
                    target = ACCEPT_SINK
                elif s2 in m.reject:
                    target = REJECT_SINK
                else:
                    nxt = (s2, pos + mv)
                    if not 0 <= nxt[1] <= tape.last_pos:
                        raise ValueError(f"machine walks off the tape from {config}")
                    if nxt not in index:
                        index[nxt] = len(configs)
                        configs.append(nxt)
                        next_frontier.append(nxt)
                    target = index[nxt]
                merged[target] = merged.get(target, Fraction(0)) + p
            rows.append(tuple(merged.items()))
        frontier = next_frontier
    return ConfigChain(tuple(configs), tuple(rows), 0)


def freeze_configs(chain: ConfigChain, predicate) -> ConfigChain:
    """Turn every config matching ``predicate`` into a self-loop.

    Frozen configs can no longer reach an absorber, so mass entering them
    shows up as ``p_diverge``; useful for cutting a chain at an iteration
    boundary.
    """
    rows = tuple(
        (((i, Fraction(1)),) if predicate(cfg) else row)
        for i, (cfg, row) in enumerate(zip(chain.configs, chain.rows))
    )
    return ConfigChain(chain.configs, rows, chain.initial)


def one_step_mass(chain: ConfigChain, idx: int) -> dict[int, Fraction]:
    """Exact distribution after one step out of config ``idx``."""
    return {t: p for t, p in chain.rows[idx]}


def _solvable_set(chain: ConfigChain) -> list[int]:
    """Transient configs from which an absorbing sink is reachable."""
    preds: dict[int, list[int]] = {}
    seeds: list[int] = []
    for i, row in enumerate(chain.rows):
        hits_sink = False
        for t, _ in row:
            if t < 0:
                hits_sink = True
            elif t != i:
                preds.setdefault(t, []).append(i)
        if hits_sink:
            seeds.append(i)
    reach = set(seeds)
    stack = list(seeds)
    while stack:
        j = stack.pop()
        for i in preds.get(j, ()):
            if i not in reach:
                reach.add(i)
                stack.append(i)
    return sorted(reach)


def _solve_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.linalg.solve(a, b)
    # One round of refinement with the residual accumulated in long double.
    a_ld = a.astype(np.longdouble)
    r = b.astype(np.longdouble) - a_ld @ x.astype(np.longdouble)
    x = x + np.linalg.solve(a, r.astype(np.float64))
    return x


def _solve_sparse(t_set, row_of, chain, b: np.ndarray) -> np.ndarray:
    from scipy.sparse import lil_matrix
    from scipy.sparse.linalg import splu

    n = len(t_set)
    a = lil_matrix((n, n))
    for local_i, i in enumerate(t_set):
        a[local_i, local_i] = 1.0
        for t, p in chain.rows[i]:
            if t >= 0 and t in row_of:
                a[local_i, row_of[t]] -= float(p)
    lu = splu(a.tocsc())
    return np.column_stack([lu.solve(b[:, j]) for j in range(b.shape[1])])


def absorption_probs(chain: ConfigChain, *, exact: bool = False,
                     initial_mass: dict[int, Fraction] | None = None) -> AbsorptionResult:
    """Solve the absorption system from the initial configuration.

    A reachability pre-pass classifies configs that cannot reach a sink;
    their mass is divergent, never a solver failure.  Dense float solve
    with one exact-residual refinement up to ``DENSE_LIMIT`` configs,
    sparse LU above.  With ``exact=True`` the system is solved in rational
    arithmetic instead (small chains only).  ``initial_mass`` overrides
    the starting distribution (indices or sink codes to masses).
    """
    if initial_mass is None:
        initial_mass = {chain.initial: Fraction(1)}

    t_set = _solvable_set(chain)
    row_of = {i: j for j, i in enumerate(t_set)}

    if exact:
        h_acc, h_rej, steps = _exact_hit_probs(chain, t_set, row_of)
    else:
        n = len(t_set)
        b = np.zeros((n, 3))
        for local_i, i in enumerate(t_set):
            for t, p in chain.rows[i]:
                if t == ACCEPT_SINK:
                    b[local_i, 0] += float(p)
                elif t == REJECT_SINK:
                    b[local_i, 1] += float(p)
        b[:, 2] = 1.0
        if n == 0:
            x = np.zeros((0, 3))
        elif n <= DENSE_LIMIT:
            a = np.eye(n)
            for local_i, i in enumerate(t_set):
                for t, p in chain.rows[i]:
                    if t >= 0 and t in row_of:
                        a[local_i, row_of[t]] -= float(p)
            x = _solve_dense(a, b)
        else:
            x = _solve_sparse(t_set, row_of, chain, b)
        h_acc = {i: float(x[j, 0]) for i, j in row_of.items()}
        h_rej = {i: float(x[j, 1]) for i, j in row_of.items()}
        steps = {i: float(x[j, 2]) for i, j in row_of.items()}

    zero = Fraction(0) if exact else 0.0
    p_acc = p_rej = expected = zero
    for src, mass in initial_mass.items():
        mass = mass if exact else float(mass)
        if src == ACCEPT_SINK:
            p_acc += mass
        elif src == REJECT_SINK:
            p_rej += mass
        elif src in row_of:
            p_acc += mass * h_acc[src]
            p_rej += mass * h_rej[src]
            expected += mass * steps[src]

    p_div = 1 - p_acc - p_rej
    if not exact:
        p_div = min(max(p_div, 0.0), 1.0)
    if p_div > DIVERGENCE_TOL:
        expected = None
    return AbsorptionResult(p_acc, p_rej, p_div, expected)


def _exact_hit_probs(chain, t_set, row_of):
    """Rational Gaussian elimination for [hit-accept, hit-reject, expected-steps]."""
    n = len(t_set)
    a = [[Fraction(0)] * n for _ in range(n)]
    b = [[Fraction(0), Fraction(0), Fraction(1)] for _ in range(n)]
    for local_i, i in enumerate(t_set):
        a[local_i][local_i] += 1
        for t, p in chain.rows[i]:
            if t == ACCEPT_SINK:
                b[local_i][0] += p
            elif t == REJECT_SINK:
                b[local_i][1] += p
            elif t in row_of:
                a[local_i][row_of[t]] -= p
    # Forward elimination with partial (first nonzero) pivoting.
    order = list(range(n))
    for col in range(n):
        piv = next(r for r in range(col, n) if a[order[r]][col] != 0)
        order[col], order[piv] = order[piv], order[col]
        prow, pb = a[order[col]], b[order[col]]
        inv = 1 / prow[col]
        for r in range(col + 1, n):
            row = a[order[r]]
            if row[col] == 0:
                continue
            f = row[col] * inv
            for c in range(col, n):
                row[c] -= f * prow[c]
            rb = b[order[r]]
            for c in range(3):
                rb[c] -= f * pb[c]
    x = [[Fraction(0)] * 3 for _ in range(n)]
    for col in range(n - 1, -1, -1):
        prow, pb = a[order[col]], b[order[col]]
        for c in range(3):
            acc = pb[c]
            for c2 in range(col + 1, n):
                acc -= prow[c2] * x[c2][c]
            x[col][c] = acc / prow[col]
    h_acc = {i: x[j][0] for i, j in row_of.items()}
    h_rej = {i: x[j][1] for i, j in row_of.items()}
    steps = {i: x[j][2] for i, j in row_of.items()}
    return h_acc, h_rej, steps


def random_walk_chain(n_positions: int) -> ConfigChain:
    """Symmetric walk on 0..N, absorbing at both ends, started at 1.

    Reaching N is the accepting sink, reaching 0 the rejecting sink.
    """
    if n_positions < 2:
        raise ValueError("walk needs at least 2 positions")
    half = Fraction(1, 2)
    configs = tuple(("walk", i) for i in range(1, n_positions))
    rows = []
    for i in range(1, n_positions):
        left = REJECT_SINK if i == 1 else i - 2
        right = ACCEPT_SINK if i == n_positions - 1 else i
        rows.append(((left, half), (right, half)))
    return ConfigChain(configs, tuple(rows), 0)


# ---------------------------------------------------------------------------
# Exact forward analysis of a 2QCFA


@dataclass(frozen=True)
class QcfaForwardResult:
    """Accumulated halting mass after synchronous forward propagation.

    ``residual`` is the live (non-halted) mass actually present in the
    propagated densities, so ``accept + reject + residual`` drifting from
    1 measures genuine numerical mass loss.
    """

    accept: float
    reject: float
    residual: float
    steps: int
    history: tuple[tuple[int, float, float, float], ...] | None = None


def qcfa_forward(m: Qcfa2, word: str, tail_tol: float = 1e-9,
                 max_steps: int = 10_000_000, keep_history: bool = False) -> QcfaForwardResult:
    """Propagate the classical-quantum joint state of ``m`` on ``word``.

    The state is a map from classical configuration to an unnormalized
    density operator.  One synchronous step applies every live config's
    action, splitting mass across measurement outcomes linearly; mass
    entering halting classical states accumulates into ``accept`` and
    ``reject``.  Stops when the live mass drops below ``tail_tol`` or
    after ``max_steps`` steps; truncation is visible in ``residual``.
    """
    tape = Tape(word)
    dim = m.dim

    # Dispatch table per (state, position): halting targets become codes.
    def code(s2: str, pos: int, mv: int):
        if s2 in m.accept:
            return ACCEPT_SINK
        if s2 in m.reject:
            return REJECT_SINK
        return (s2, pos + mv)

    table: dict[tuple[str, int], tuple] = {}
    for s in m.states:
        if s in m.halting:
            continue
        for pos in range(tape.last_pos + 1):
            sym = tape.symbol(pos)
            action = m.theta[(s, sym)]
            if isinstance(action, UnitaryMatrix):
                s2, mv = m.delta_u[(s, sym)]
                table[(s, pos)] = ("u", action.entries, code(s2, pos, mv))
            else:
                branches = []
                for proj, outcome in zip(action.projectors, action.outcomes):
                    s2, mv = m.delta_m[(s, sym, outcome)]
                    branches.append((proj, code(s2, pos, mv)))
                table[(s, pos)] = ("m", branches)

    psi0 = m.initial_state_vector().amplitudes
    live: dict[tuple[str, int], np.ndarray] = {
        (m.initial, 0): np.outer(psi0, psi0.conj())
    }
    if m.initial in m.halting:
        raise ValueError("machine halts in its initial state")

    accept = reject = 0.0
    residual = 1.0
    steps = 0
    history: list[tuple[int, float, float, float]] = []
    if keep_history:
        history.append((0, accept, reject, residual))

    while residual >= tail_tol and steps < max_steps and live:
        new: dict[tuple[str, int], np.ndarray] = {}

        def route(target, rho):
            nonlocal accept, reject
            mass = float(np.trace(rho).real)
            if mass <= 0.0:
                return
            if target == ACCEPT_SINK:
                accept += mass
            elif target == REJECT_SINK:
                reject += mass
            elif target in new:
                new[target] = new[target] + rho
            else:
                new[target] = rho

        for key, rho in live.items():
            entry = table[key]
            if entry[0] == "u":
                _, u, target = entry
                route(target, u @ rho @ u.conj().T)
            else:
                for proj, target in entry[1]:
                    route(target, proj @ rho @ proj.conj().T)
        live = new
        steps += 1
        residual = float(sum(np.trace(rho).real for rho in live.values()))
        if keep_history:
            history.append((steps, accept, reject, residual))

    return QcfaForwardResult(
        accept=accept, reject=reject, residual=residual, steps=steps,
        history=tuple(history) if keep_history else None,
    )


# ---------------------------------------------------------------------------
# Geometric-series composers


def two_outcome_series(p_a, p_r, variant: str):
    """Overall halting probability of repeated (reject-chance, accept-chance) rounds.

    ``reject_first`` composes sum_i (1-p_a)^i (1-p_r)^i p_r, i.e.
    ``p_r / (p_a + p_r - p_a*p_r)``; ``accept_first`` composes
    sum_i (1-p_a)^i (1-p_r)^(i+1) p_a, i.e.
    ``p_a(1-p_r) / (p_a(1-p_r) + p_r)``.  Both are evaluated in closed
    form and work for floats or Fractions.  Note the ``accept_first``
    survival factors double-count relative to exact per-round exclusivity;
    it is a bound composer, not ground truth (use absorption_probs for
    that).
    """
    if not 0 <= p_a <= 1 or not 0 <= p_r <= 1:
        raise ValueError("probabilities must lie in [0, 1]")
    if p_a == 0 and p_r == 0:
        raise ValueError("series undefined for p_a = p_r = 0")
    if variant == "reject_first":
        return p_r / (p_a + p_r - p_a * p_r)
    if variant == "accept_first":
        top = p_a * (1 - p_r)
        return top / (top + p_r)
    raise ValueError(f"unknown variant {variant!r}")
