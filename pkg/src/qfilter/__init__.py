"""Coupled quantum trajectory / quantum filter simulation toolkit.

Evolves a true quantum state together with its filter under shared
continuous-measurement records (Wiener-diffusive or Poisson-counting),
computes the Uhlmann fidelity between them, and certifies statistically
that the mean fidelity never decreases.
"""

from .densitymat import (
    DensityMatrix,
    fidelity,
    frobenius_inner,
    hermitian_sqrt,
    maximally_mixed,
    project_to_density,
    random_density,
    random_pure,
)
from .jump import (
    JumpConfig,
    KrausSet,
    build_kraus_set,
    chain_step,
    diffusion_limit_check,
    jump_rates,
    jump_step,
    normalize_kraus_set,
    one_step_expected_fidelity,
    suggested_dt,
)
from .model import (
    SystemModel,
    lambda_alpha,
    lambda_superop,
    lindblad,
    paper_qubit,
    upsilon_alpha,
)
from .sde import (
    IntegratorConfig,
    MeasurementRecord,
    TrajectoryPair,
    coupled_step,
    em_step,
    kraus_step,
    measurement_increment,
    sample_wiener,
    simulate_pair,
)
from .stats import (
    EnsembleConfig,
    EnsembleResult,
    SubmartingaleReport,
    final_convergence,
    run_ensemble,
    submartingale_test,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "EnsembleConfig",
    "EnsembleResult",
    "IntegratorConfig",
    "JumpConfig",
    "KrausSet",
    "MeasurementRecord",
    "SubmartingaleReport",
    "SystemModel",
    "TrajectoryPair",
    "build_kraus_set",
    "chain_step",
    "coupled_step",
    "diffusion_limit_check",
    "em_step",
    "fidelity",
    "final_convergence",
    "frobenius_inner",
    "hermitian_sqrt",
    "jump_rates",
    "jump_step",
    "kraus_step",
    "lambda_alpha",
    "lambda_superop",
    "lindblad",
    "maximally_mixed",
    "measurement_increment",
    "normalize_kraus_set",
    "one_step_expected_fidelity",
    "paper_qubit",
    "project_to_density",
    "random_density",
    "random_pure",
    "run_ensemble",
    "sample_wiener",
    "simulate_pair",
    "submartingale_test",
    "suggested_dt",
    "upsilon_alpha",
]
