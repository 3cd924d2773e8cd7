"""Seeded Monte Carlo execution of whole trajectories.

Randomness contract: trajectory ``i`` of a run with master seed ``s``
draws its uniforms from a Philox (4x64) counter-based generator keyed by
``(s, i)``, in draw order.  A 2PFA consumes one uniform per transition; a
2QCFA consumes one uniform per measurement action (unitary transitions
draw nothing).  This makes every trajectory a pure function of
``(machine, input, seed, trial index, step budget)``, independent of
execution order, worker count, and engine.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import _engine
from .core import Tape, UnitaryMatrix
from .machines import Configuration, Outcome, Qcfa2, pfa_step, qcfa_step

_MASK64 = (1 << 64) - 1


class UniformStream:
    """Uniform draws in [0, 1) from Philox keyed by (seed, stream index)."""

    def __init__(self, seed: int, stream: int = 0):
        bits = np.random.Philox(key=[seed & _MASK64, stream & _MASK64])
        self._gen = np.random.Generator(bits)

    def next(self) -> float:
        return float(self._gen.random())

    def block(self, n: int) -> np.ndarray:
        return self._gen.random(n)


@dataclass(frozen=True)
class RunConfig:
    """Parameters of a Monte Carlo run."""

    seed: int
    trials: int
    max_steps: int
    machine_id: str | None = None
    input: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class TrajectoryResult:
    """One trajectory: how it ended, how long it ran, and how many
    outer-loop iterations it completed (0 when the machine declares no
    loop marker)."""

    outcome: Outcome
    steps: int
    iterations: int


@dataclass(frozen=True)
class RunStats:
    """Aggregate over trials; step statistics cover halting runs only."""

    trials: int
    accepts: int
    rejects: int
    timeouts: int
    accept_rate: float
    accept_ci: tuple[float, float]
    reject_rate: float
    reject_ci: tuple[float, float]
    steps_mean: float | None
    steps_median: float | None
    steps_p90: float | None
    steps_max: int | None
    total_steps: int
    total_iterations: int


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials == 0:
        return (0.0, 1.0)
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


def _completed_iterations(entries: int, halted: bool) -> int:
    # A halt completes the running iteration; a timeout leaves it unfinished.
    return entries if halted else max(0, entries - 1)


def _run_python(machine, word: str, stream: UniformStream, max_steps: int) -> TrajectoryResult:
    tape = Tape(word)
    marker = machine.loop_marker
    config = Configuration(machine.initial, 0)
    if isinstance(machine, Qcfa2):
        config.psi = machine.initial_state_vector()
    quantum = isinstance(machine, Qcfa2)
    steps = 0
    entries = 0
    while steps < max_steps:
        if quantum:
            action = machine.theta[(config.state, tape.symbol(config.pos))]
            u = 0.0 if isinstance(action, UnitaryMatrix) else stream.next()
            result = qcfa_step(machine, config, tape, u)
        else:
            result = pfa_step(machine, config, tape, stream.next())
        steps += 1
        if isinstance(result, Outcome):
            return TrajectoryResult(result, steps, _completed_iterations(entries, True))
        if marker is not None and result.state == marker and config.state != marker:
            entries += 1
        config = result
    return TrajectoryResult(Outcome.TIMEOUT, steps, _completed_iterations(entries, False))


_STATUS_OUTCOME = {
    _engine.ACCEPTED: Outcome.ACCEPT,
    _engine.REJECTED: Outcome.REJECT,
    _engine.TIMED_OUT: Outcome.TIMEOUT,
}


def _resolve_engine(engine: str) -> str:
    if engine == "auto":
        return "compiled" if _engine.HAS_NUMBA else "python"
    if engine not in ("python", "compiled"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "compiled" and not _engine.HAS_NUMBA:
        raise RuntimeError("compiled engine requested but numba is unavailable")
    return engine


def run_trajectory(machine, word: str, seed: int, max_steps: int,
                   stream: int = 0, engine: str = "auto") -> TrajectoryResult:
    """Run one trajectory; deterministic in (machine, word, seed, stream)."""
    engine = _resolve_engine(engine)
    uni = UniformStream(seed, stream)
    if engine == "python":
        return _run_python(machine, word, uni, max_steps)
    program = _engine.pack(machine, word)
    status, steps, entries = _engine.run_compiled(program, uni, max_steps)
    outcome = _STATUS_OUTCOME[status]
    return TrajectoryResult(outcome, steps, _completed_iterations(entries, outcome != Outcome.TIMEOUT))


def aggregate(results: list[TrajectoryResult]) -> RunStats:
    """Order-independent reduction of trajectory results."""
    trials = len(results)
    accepts = sum(1 for r in results if r.outcome == Outcome.ACCEPT)
    rejects = sum(1 for r in results if r.outcome == Outcome.REJECT)
    timeouts = trials - accepts - rejects
    halted_steps = sorted(r.steps for r in results if r.outcome != Outcome.TIMEOUT)
    if halted_steps:
        arr = np.array(halted_steps, dtype=np.float64)
        steps_mean = float(arr.mean())
        steps_median = float(np.percentile(arr, 50))
        steps_p90 = float(np.percentile(arr, 90))
        steps_max = int(arr[-1])
    else:
        steps_mean = steps_median = steps_p90 = steps_max = None
    return RunStats(
        trials=trials,
        accepts=accepts,
        rejects=rejects,
        timeouts=timeouts,
        accept_rate=accepts / trials,
        accept_ci=wilson_interval(accepts, trials),
        reject_rate=rejects / trials,
        reject_ci=wilson_interval(rejects, trials),
        steps_mean=steps_mean,
        steps_median=steps_median,
        steps_p90=steps_p90,
        steps_max=steps_max,
        total_steps=sum(r.steps for r in results),
        total_iterations=sum(r.iterations for r in results),
    )


def run_trials(machine, word: str, cfg: RunConfig, engine: str = "auto") -> RunStats:
    """Run ``cfg.trials`` independent trajectories and aggregate them.

    Trial ``i`` uses the stream keyed by ``(cfg.seed, i)``; the aggregate
    is independent of the order in which trials execute.
    """
    return aggregate(collect_trajectories(machine, word, cfg, engine))


def collect_trajectories(machine, word: str, cfg: RunConfig, engine: str = "auto") -> list[TrajectoryResult]:
    """The individual trajectories behind :func:`run_trials`."""
    engine = _resolve_engine(engine)
    results: list[TrajectoryResult] = []
    if engine == "python":
        for i in range(cfg.trials):
            results.append(_run_python(machine, word, UniformStream(cfg.seed, i), cfg.max_steps))
        return results
    program = _engine.pack(machine, word)
    for i in range(cfg.trials):
        status, steps, entries = _engine.run_compiled(program, UniformStream(cfg.seed, i), cfg.max_steps)
        outcome = _STATUS_OUTCOME[status]
        results.append(TrajectoryResult(outcome, steps,
                                        _completed_iterations(entries, outcome != Outcome.TIMEOUT)))
    return results
