"""Two-way probabilistic and quantum-classical finite automata.

Simulation (seeded Monte Carlo), exact analysis (absorbing-chain solves
and quantum forward propagation), and the concrete recognizers for the
center-marked length-equality language over {a, b, c}.
"""

__version__ = "0.1.0"

from .core import (
    LEFT_ENDMARKER,
    RIGHT_ENDMARKER,
    Measurement,
    StateVector,
    Tape,
    UnitaryMatrix,
    apply_unitary,
    measure,
    outcome_distribution,
    tape_symbol,
)
from .machines import (
    CoinDistribution,
    Configuration,
    Outcome,
    Pfa2,
    Qcfa2,
    ValidationIssue,
    load_machine,
    machine_from_json,
    machine_to_json,
    pfa_step,
    qcfa_step,
    save_machine,
    validate_pfa,
    validate_qcfa,
)
from .runtime import (
    RunConfig,
    RunStats,
    TrajectoryResult,
    run_trajectory,
    run_trials,
    wilson_interval,
)
from .exact import (
    AbsorptionResult,
    ConfigChain,
    QcfaForwardResult,
    absorption_probs,
    build_config_chain,
    freeze_configs,
    qcfa_forward,
    random_walk_chain,
    two_outcome_series,
)
from . import lm

__all__ = [
    "LEFT_ENDMARKER",
    "RIGHT_ENDMARKER",
    "Measurement",
    "StateVector",
    "Tape",
    "UnitaryMatrix",
    "apply_unitary",
    "measure",
    "outcome_distribution",
    "tape_symbol",
    "CoinDistribution",
    "Configuration",
    "Outcome",
    "Pfa2",
    "Qcfa2",
    "ValidationIssue",
    "load_machine",
    "machine_from_json",
    "machine_to_json",
    "pfa_step",
    "qcfa_step",
    "save_machine",
    "validate_pfa",
    "validate_qcfa",
    "RunConfig",
    "RunStats",
    "TrajectoryResult",
    "run_trajectory",
    "run_trials",
    "wilson_interval",
    "AbsorptionResult",
    "ConfigChain",
    "QcfaForwardResult",
    "absorption_probs",
    "build_config_chain",
    "freeze_configs",
    "qcfa_forward",
    "random_walk_chain",
    "two_outcome_series",
    "lm",
    "__version__",
]
