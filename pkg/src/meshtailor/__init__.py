"""Defect-tailored compilation, port allocation and splitting-ratio calibration
for rectangular Mach-Zehnder meshes."""

from .allocation import (Allocation, ExperimentConfig, MinDistance, MinPower, TargetPower,
                         apply_allocation, classify_transpositions, randomized_search,
                         relabel_experiment, sweep_search, unrestricted_search)
from .calibration import CalibrationResult, calibrate_global, calibrate_per_mzi, probe_unitary
from .compiler import PhaseProgram, decompose, decompose_batch, decompose_ideal, reconstruct, reconstruct_batch
from .linalg import fidelity_distance, haar_random_unitaries, haar_random_unitary, permutation_matrix
from .mesh import ChipSpec, MZIUnit, PhaseShifterCal, clements_layout, mzi_matrix, sample_chip
from .power import PowerReport, phase_to_v2, program_power
from .simulator import SimulatedChip, execute, intensity_response

__version__ = "0.1.0"

__all__ = [
    "Allocation", "CalibrationResult", "ChipSpec", "ExperimentConfig", "MZIUnit", "MinDistance",
    "MinPower", "PhaseProgram", "PhaseShifterCal", "PowerReport", "SimulatedChip", "TargetPower",
    "apply_allocation", "calibrate_global", "calibrate_per_mzi", "classify_transpositions",
    "clements_layout", "decompose", "decompose_batch", "decompose_ideal", "execute",
    "fidelity_distance", "haar_random_unitaries", "haar_random_unitary", "intensity_response",
    "mzi_matrix", "permutation_matrix", "phase_to_v2", "probe_unitary", "program_power",
    "randomized_search", "reconstruct", "reconstruct_batch", "relabel_experiment", "sample_chip",
    "sweep_search", "unrestricted_search",
]
