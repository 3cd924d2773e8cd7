"""Compiled trajectory kernels.

A machine plus a fixed tape compiles to flat integer/float arrays indexed
by row = state_index * (len(tape)+2) + head_position; the numba kernels
then run whole trajectories over those arrays.  The kernels consume
uniforms from a caller-supplied buffer and suspend (status RUNNING) when
it empties, so the caller controls the random stream; draw-for-draw they
match the interpreted steppers in ``runtime``.

This module is an optimization detail: if numba is unavailable everything
falls back to the pure-Python path in ``runtime``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Tape, UnitaryMatrix
from .machines import Pfa2, Qcfa2

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


# Kernel exit statuses.
RUNNING = 0   # uniform buffer exhausted; resume with a fresh buffer
ACCEPTED = 1
REJECTED = 2
TIMED_OUT = 3
MASS_LOST = 4

_ACC, _REJ = -1, -2


def _target_code(m, sidx, s2: str, pos: int, mv: int, last_pos: int, P: int) -> int:
    if s2 in m.accept:
        return _ACC
    if s2 in m.reject:
        return _REJ
    new_pos = pos + mv
    if not 0 <= new_pos <= last_pos:
        raise ValueError(f"machine walks off the tape at ({s2!r}, {new_pos})")
    return sidx[s2] * P + new_pos


@dataclass(frozen=True)
class PfaProgram:
    P: int
    start_row: int
    marker: int
    off: np.ndarray   # int64[R+1]
    cum: np.ndarray   # float64, cumulative probabilities per entry
    nxt: np.ndarray   # int64, target row or sink code per entry


def pack_pfa(m: Pfa2, word: str) -> PfaProgram:
    tape = Tape(word)
    P = tape.last_pos + 1
    running = [s for s in m.states if s not in m.halting]
    sidx = {s: i for i, s in enumerate(running)}
    if m.initial not in sidx:
        raise ValueError("initial state is halting; nothing to run")
    rows = len(running) * P
    off = np.zeros(rows + 1, dtype=np.int64)
    cum_list: list[float] = []
    nxt_list: list[int] = []
    for s in running:
        for pos in range(P):
            dist = m.transitions[(s, tape.symbol(pos))]
            acc = Fraction(0)
            for (s2, mv), p in dist.entries:
                if p <= 0:
                    continue
                acc += p
                cum_list.append(float(acc))
                nxt_list.append(_target_code(m, sidx, s2, pos, mv, tape.last_pos, P))
            off[sidx[s] * P + pos + 1] = len(cum_list)
    marker = sidx.get(m.loop_marker, -1) if m.loop_marker else -1
    return PfaProgram(
        P=P,
        start_row=sidx[m.initial] * P + 0,
        marker=marker,
        off=off,
        cum=np.array(cum_list, dtype=np.float64),
        nxt=np.array(nxt_list, dtype=np.int64),
    )


@dataclass(frozen=True)
class QcfaProgram:
    P: int
    start_row: int
    marker: int
    psi0: np.ndarray       # complex128[dim]
    kind: np.ndarray       # int8[R]: 0 unitary, 1 measurement
    op_idx: np.ndarray     # int64[R]: matrix index (unitary rows)
    utgt: np.ndarray       # int64[R]
    m_off: np.ndarray      # int64[R]: base into branch arrays
    m_cnt: np.ndarray      # int64[R]
    bproj: np.ndarray      # int64[]: projector matrix index per branch
    btgt: np.ndarray       # int64[]
    mats: np.ndarray       # complex128[nmat, dim, dim]


def pack_qcfa(m: Qcfa2, word: str) -> QcfaProgram:
    tape = Tape(word)
    P = tape.last_pos + 1
    dim = m.dim
    running = [s for s in m.states if s not in m.halting]
    sidx = {s: i for i, s in enumerate(running)}
    if m.initial not in sidx:
        raise ValueError("initial state is halting; nothing to run")
    rows = len(running) * P

    mats: list[np.ndarray] = []
    mat_index: dict[bytes, int] = {}

    def intern(mat: np.ndarray) -> int:
        key = mat.tobytes()
        if key not in mat_index:
            mat_index[key] = len(mats)
            mats.append(np.ascontiguousarray(mat))
        return mat_index[key]

    kind = np.zeros(rows, dtype=np.int8)
    op_idx = np.zeros(rows, dtype=np.int64)
    utgt = np.zeros(rows, dtype=np.int64)
    m_off = np.zeros(rows, dtype=np.int64)
    m_cnt = np.zeros(rows, dtype=np.int64)
    bproj_list: list[int] = []
    btgt_list: list[int] = []

    for s in running:
        for pos in range(P):
            row = sidx[s] * P + pos
            sym = tape.symbol(pos)
            action = m.theta[(s, sym)]
            if isinstance(action, UnitaryMatrix):
                kind[row] = 0
                op_idx[row] = intern(action.entries)
                s2, mv = m.delta_u[(s, sym)]
                utgt[row] = _target_code(m, sidx, s2, pos, mv, tape.last_pos, P)
            else:
                kind[row] = 1
                m_off[row] = len(bproj_list)
                m_cnt[row] = len(action.projectors)
                for proj, outcome in zip(action.projectors, action.outcomes):
                    s2, mv = m.delta_m[(s, sym, outcome)]
                    bproj_list.append(intern(proj))
                    btgt_list.append(_target_code(m, sidx, s2, pos, mv, tape.last_pos, P))

    marker = sidx.get(m.loop_marker, -1) if m.loop_marker else -1
    psi0 = m.initial_state_vector().amplitudes.copy()
    return QcfaProgram(
        P=P,
        start_row=sidx[m.initial] * P + 0,
        marker=marker,
        psi0=psi0,
        kind=kind,
        op_idx=op_idx,
        utgt=utgt,
        m_off=m_off,
        m_cnt=m_cnt,
        bproj=np.array(bproj_list, dtype=np.int64),
        btgt=np.array(btgt_list, dtype=np.int64),
        mats=np.stack(mats) if mats else np.zeros((0, dim, dim), dtype=np.complex128),
    )


@njit(cache=True)
def _pfa_kernel(off, cum, nxt, P, marker, max_steps, u, io):  # pragma: no cover - compiled
    row = io[0]
    steps = io[1]
    iters = io[2]
    k = 0
    n_u = u.shape[0]
    status = RUNNING
    while True:
        if steps >= max_steps:
            status = TIMED_OUT
            break
        if k >= n_u:
            status = RUNNING
            break
        x = u[k]
        k += 1
        lo = off[row]
        hi = off[row + 1]
        t = nxt[hi - 1]
        for j in range(lo, hi):
            if x < cum[j]:
                t = nxt[j]
                break
        steps += 1
        if t == _ACC:
            status = ACCEPTED
            break
        if t == _REJ:
            status = REJECTED
            break
        if marker >= 0 and t // P == marker and row // P != marker:
            iters += 1
        row = t
    io[0] = row
    io[1] = steps
    io[2] = iters
    return status, k


@njit(cache=True)
def _qcfa_kernel(kind, op_idx, utgt, m_off, m_cnt, bproj, btgt, mats,
                 P, marker, max_steps, u, io, psi):  # pragma: no cover - compiled
    row = io[0]
    steps = io[1]
    iters = io[2]
    k = 0
    n_u = u.shape[0]
    dim = psi.shape[0]
    tmp = np.empty(dim, dtype=np.complex128)
    status = RUNNING
    while True:
        if steps >= max_steps:
            status = TIMED_OUT
            break
        if kind[row] == 0:
            a = mats[op_idx[row]]
            for i in range(dim):
                acc = 0.0 + 0.0j
                for j in range(dim):
                    acc += a[i, j] * psi[j]
                tmp[i] = acc
            for i in range(dim):
                psi[i] = tmp[i]
            t = utgt[row]
        else:
            if k >= n_u:
                status = RUNNING
                break
            x = u[k]
            k += 1
            base = m_off[row]
            cnt = m_cnt[row]
            chosen = -1
            last_pos = -1
            cumv = 0.0
            for b in range(cnt):
                pm = mats[bproj[base + b]]
                w = 0.0
                for i in range(dim):
                    acc = 0.0 + 0.0j
                    for j in range(dim):
                        acc += pm[i, j] * psi[j]
                    w += acc.real * acc.real + acc.imag * acc.imag
                if w > 0.0:
                    last_pos = b
                    cumv += w
                    if chosen < 0 and x < cumv:
                        chosen = b
            if cumv <= 1e-9:
                status = MASS_LOST
                break
            if chosen < 0:
                chosen = last_pos
            pm = mats[bproj[base + chosen]]
            w = 0.0
            for i in range(dim):
                acc = 0.0 + 0.0j
                for j in range(dim):
                    acc += pm[i, j] * psi[j]
                tmp[i] = acc
                w += acc.real * acc.real + acc.imag * acc.imag
            inv = 1.0 / np.sqrt(w)
            for i in range(dim):
                psi[i] = tmp[i] * inv
            t = btgt[base + chosen]
        steps += 1
        if t == _ACC:
            status = ACCEPTED
            break
        if t == _REJ:
            status = REJECTED
            break
        if marker >= 0 and t // P == marker and row // P != marker:
            iters += 1
        row = t
    io[0] = row
    io[1] = steps
    io[2] = iters
    return status, k


def run_compiled(program, stream, max_steps: int) -> tuple[int, int, int]:
    """Run one trajectory to completion; returns (status, steps, marker entries)."""
    io = np.array([program.start_row, 0, 0], dtype=np.int64)
    block = 256
    if isinstance(program, PfaProgram):
        while True:
            status, _ = _pfa_kernel(program.off, program.cum, program.nxt,
                                    program.P, program.marker, max_steps,
                                    stream.block(block), io)
            if status != RUNNING:
                break
            block = min(block * 4, 16384)
    else:
        psi = program.psi0.copy()
        while True:
            status, _ = _qcfa_kernel(program.kind, program.op_idx, program.utgt,
                                     program.m_off, program.m_cnt, program.bproj,
                                     program.btgt, program.mats,
                                     program.P, program.marker, max_steps,
                                     stream.block(block), io, psi)
            if status != RUNNING:
                break
            block = min(block * 4, 16384)
    if status == MASS_LOST:
        raise RuntimeError("all measurement outcomes had zero probability")
    return status, int(io[1]), int(io[2])


def pack(machine, word: str):
    if isinstance(machine, Pfa2):
        return pack_pfa(machine, word)
    if isinstance(machine, Qcfa2):
        return pack_qcfa(machine, word)
    raise TypeError(f"not a machine: {type(machine).__name__}")
