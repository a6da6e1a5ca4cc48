"""Toffoli-gate pulse synthesis on a three-qubit XY chain and multifractal
analysis of the gate fidelity under 1/f coupling noise."""

from .control import (
    ObjectiveSpec,
    OptimizationReport,
    fidelity_sweep,
    objective_flatten,
    objective_plain,
    objective_weighted_interval,
    optimize,
)
from .damf import (
    MultifractalAnalyzer,
    SingularitySpectrum,
    analyze,
    dominant_amplitudes,
    fit_zeta,
    integrated_path,
    legendre,
    structure_functions,
)
from .emd import EmpiricalModeDecomposition, ImfSet, sift
from .noise import coupling_series, pink_noise, white_noise
from .pipeline import ExperimentConfig, FidelityTable, fidelity_series, run_experiment
from .quantum import (
    CouplingConfig,
    PulseSet,
    control_hamiltonian,
    drift_hamiltonian,
    gate_fidelity,
    propagate,
    toffoli_target,
)

__version__ = "0.1.0"
