"""Classical-intensity execution of phase programs on a (defective) chip."""

from __future__ import annotations

import numpy as np

from .compiler import PhaseProgram, reconstruct, reconstruct_batch
from .mesh import ChipSpec


def _check(program: PhaseProgram, chip: ChipSpec) -> None:
    if program.n_modes != chip.n_modes:
        raise ValueError(f"program has {program.n_modes} modes but chip has {chip.n_modes}")


def execute(program: PhaseProgram, chip: ChipSpec) -> np.ndarray:
    """Transfer matrix the chip realises when ``program`` is set on it."""
    _check(program, chip)
    return reconstruct(program, chip.thetas)


def execute_batch(phi_i, phi_e, output_phases, chip: ChipSpec) -> np.ndarray:
    return reconstruct_batch(phi_i, phi_e, output_phases, chip.thetas)


def intensity_response(program: PhaseProgram, chip: ChipSpec, input_port: int) -> np.ndarray:
    """Output intensities for unit light injected at ``input_port`` (0-based)."""
    if not 0 <= input_port < chip.n_modes:
        raise ValueError(f"input port {input_port} out of range for {chip.n_modes} modes")
    U = execute(program, chip)
    return np.abs(U[:, input_port]) ** 2


class SimulatedChip:
    """Black-box view of a chip: set phases, inject light, read intensities.

    Calibration routines only use :attr:`n_modes` and the ``measure``
    methods, so a hardware driver with the same surface can stand in.

    Args:
        chip: True chip parameters, hidden from the caller.
        noise_sd: Standard deviation of additive Gaussian noise on each
            measured intensity (0 disables).
        phase_error_sd: Standard deviation of Gaussian errors added to every
            programmed phase before execution (0 disables).
        seed: Seed for the noise generator.
    """

    def __init__(self, chip: ChipSpec, noise_sd: float = 0.0, phase_error_sd: float = 0.0, seed=None):
        if noise_sd < 0 or phase_error_sd < 0:
            raise ValueError("noise levels must be non-negative")
        self._chip = chip
        self.noise_sd = noise_sd
        self.phase_error_sd = phase_error_sd
        self._rng = np.random.default_rng(seed)
        self.measurements = 0

    @property
    def n_modes(self) -> int:
        return self._chip.n_modes

    def _program_as_run(self, program: PhaseProgram) -> PhaseProgram:
        if not self.phase_error_sd:
            return program
        sd = self.phase_error_sd
        return program.replace(
            phi_i=program.phi_i + self._rng.normal(0, sd, program.phi_i.shape),
            phi_e=program.phi_e + self._rng.normal(0, sd, program.phi_e.shape),
            output_phases=program.output_phases + self._rng.normal(0, sd, program.output_phases.shape),
        )

    def measure_all(self, program: PhaseProgram) -> np.ndarray:
        """Intensity matrix ``I[out, in]``, one injection per input port."""
        _check(program, self._chip)
        U = execute(self._program_as_run(program), self._chip)
        intensities = np.abs(U) ** 2
        if self.noise_sd:
            intensities = intensities + self._rng.normal(0, self.noise_sd, intensities.shape)
        self.measurements += self.n_modes
        return intensities

    def measure(self, program: PhaseProgram, input_port: int) -> np.ndarray:
        if not 0 <= input_port < self.n_modes:
            raise ValueError(f"input port {input_port} out of range for {self.n_modes} modes")
        _check(program, self._chip)
        U = execute(self._program_as_run(program), self._chip)
        intensities = np.abs(U[:, input_port]) ** 2
        if self.noise_sd:
            intensities = intensities + self._rng.normal(0, self.noise_sd, intensities.shape)
        self.measurements += 1
        return intensities


def intensity_csv_rows(intensities) -> list[tuple[int, float]]:
    """``(port, intensity)`` rows with 1-based port labels."""
    return [(j + 1, float(x)) for j, x in enumerate(intensities)]
