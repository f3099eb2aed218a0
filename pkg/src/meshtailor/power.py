"""Phase -> voltage -> power.

Each shifter obeys ``phi = alpha + beta * V**2``.  A phase is realised with the
smallest non-negative ``V**2``, so ``V**2 = ((phi - alpha) mod 2 pi) / beta``.
Power is reported in units of volt squared (proportionality constant 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .compiler import PhaseProgram
from .mesh import ChipSpec, PhaseShifterCal

TWO_PI = 2 * np.pi


def phase_to_v2(phi, cal: PhaseShifterCal | None = None, *, alpha=None, beta=None):
    """Minimal non-negative ``V**2`` realising ``phi``.

    Pass either a :class:`PhaseShifterCal` or array-like ``alpha``/``beta``.
    """
    if cal is not None:
        alpha, beta = cal.alpha, cal.beta
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    v2 = np.mod(np.asarray(phi, dtype=float) - alpha, TWO_PI) / beta
    return float(v2) if np.ndim(v2) == 0 else v2


@dataclass(frozen=True, eq=False)
class PowerReport:
    per_shifter_v2: np.ndarray  # internal shifters, then external, then outputs
    total: float

    def to_dict(self) -> dict:
        return {"total": self.total, "per_shifter": [float(x) for x in self.per_shifter_v2]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_shapes(n_modes: int, chip: ChipSpec) -> None:
    if chip.n_modes != n_modes:
        raise ValueError(f"program has {n_modes} modes but chip has {chip.n_modes}")


def program_power(program: PhaseProgram, chip: ChipSpec, include_output: bool = True) -> PowerReport:
    """Total ``sum V**2`` needed to set ``program`` on ``chip``."""
    _check_shapes(program.n_modes, chip)
    parts = [
        phase_to_v2(program.phi_i, alpha=chip.internal_cal[:, 0], beta=chip.internal_cal[:, 1]),
        phase_to_v2(program.phi_e, alpha=chip.external_cal[:, 0], beta=chip.external_cal[:, 1]),
    ]
    if include_output:
        parts.append(phase_to_v2(program.output_phases, alpha=chip.output_cal[:, 0],
                                 beta=chip.output_cal[:, 1]))
    per = np.concatenate([np.atleast_1d(p) for p in parts])
    return PowerReport(per, float(per.sum()))


def power_batch(phi_i, phi_e, output_phases, chip: ChipSpec, include_output: bool = True) -> np.ndarray:
    """Vectorised total power for ``(B, M)`` / ``(B, n)`` phase arrays."""
    _check_shapes(np.shape(output_phases)[-1], chip)
    ic, ec, oc = chip.internal_cal, chip.external_cal, chip.output_cal
    total = (np.mod(phi_i - ic[:, 0], TWO_PI) / ic[:, 1]).sum(axis=-1)
    total += (np.mod(phi_e - ec[:, 0], TWO_PI) / ec[:, 1]).sum(axis=-1)
    if include_output:
        total += (np.mod(output_phases - oc[:, 0], TWO_PI) / oc[:, 1]).sum(axis=-1)
    return total
