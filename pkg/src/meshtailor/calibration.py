"""Recover beam-splitter parameters of a chip from intensity measurements.

Both routines only talk to a *device*: any object with an ``n_modes``
attribute and ``measure(program, port)`` / ``measure_all(program)`` methods
returning output intensities (see :class:`meshtailor.simulator.SimulatedChip`).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .compiler import PhaseProgram, decompose_batch, reconstruct
from .mesh import BALANCED, clements_layout, theta_from_reflectivity

BAR = np.pi
CROSS = 0.0
R_MIN, R_MAX = 0.01, 0.99


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Outcome of a calibration run.

    Attributes:
        per_mzi_theta: ``(M,)`` recovered parameters, layer-major (per-MZI method).
        global_theta: Single fitted parameter (global method).
        evaluations: Number of objective evaluations (global) or MZIs probed.
        residual: Final objective value (0 for the per-MZI method).
        trace: ``(r, f(r))`` pairs in evaluation order (global method).
        bracketed: False when the optimum sits on the search-interval edge.
    """

    per_mzi_theta: np.ndarray | None = None
    global_theta: float | None = None
    evaluations: int = 0
    residual: float = 0.0
    trace: list[tuple[float, float]] = field(default_factory=list)
    bracketed: bool = True

    def __post_init__(self):
        if self.per_mzi_theta is None and self.global_theta is None:
            raise ValueError("a calibration result needs per-MZI or global parameters")
        vals = [] if self.per_mzi_theta is None else list(np.ravel(self.per_mzi_theta))
        if self.global_theta is not None:
            vals.append(self.global_theta)
        if any(not 0 < v < np.pi / 2 for v in vals):
            raise ValueError("calibrated parameters must lie in (0, pi/2)")

    @property
    def global_reflectivity(self) -> float | None:
        return None if self.global_theta is None else math.cos(self.global_theta) ** 2

    @property
    def per_mzi_reflectivity(self) -> np.ndarray | None:
        return None if self.per_mzi_theta is None else np.cos(self.per_mzi_theta) ** 2

    def to_dict(self) -> dict:
        return {
            "per_mzi_theta": None if self.per_mzi_theta is None else [float(t) for t in self.per_mzi_theta],
            "global_theta": self.global_theta,
            "global_reflectivity": self.global_reflectivity,
            "evaluations": self.evaluations,
            "residual": self.residual,
            "bracketed": self.bracketed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# --- per-MZI method ------------------------------------------------------------

def single_cross_program(n: int, k: int) -> PhaseProgram:
    """MZI ``k`` crossed, every other MZI in the bar state."""
    m = n * (n - 1) // 2
    phi_i = np.full(m, BAR)
    phi_i[k] = CROSS
    return PhaseProgram(n, phi_i, np.zeros(m), np.zeros(n))


def theta_from_intensities(i_bar: float, i_cross: float, branch: str = "low") -> float:
    """Invert ``I_bar : I_cross = cos^2 2t : sin^2 2t``.

    The intensities cannot tell ``t`` from ``pi/2 - t`` (reflectivity ``r``
    from ``1 - r``), so ``branch`` picks the solution: ``"low"`` returns
    ``t >= pi/4`` (``r <= 0.5``), ``"high"`` returns ``t <= pi/4``.
    """
    if i_bar < 0 or i_cross < 0 or i_bar + i_cross == 0:
        raise ValueError("intensities must be non-negative and not both zero")
    half = 0.5 * math.atan2(math.sqrt(i_cross), math.sqrt(i_bar))  # in [0, pi/4]
    if branch == "low":
        t = np.pi / 2 - half
    elif branch == "high":
        t = half
    else:
        raise ValueError("branch must be 'low' or 'high'")
    eps = 1e-15
    return min(max(t, eps), np.pi / 2 - eps)


def calibrate_per_mzi(device, branch: str = "low") -> CalibrationResult:
    """Measure every MZI in isolation.

    For MZI ``k`` on modes ``(m, m+1)`` all other MZIs are set to bar, so light
    injected at chip input ``m`` reaches it unchanged and its two outputs
    travel straight to chip outputs ``m`` (bar path) and ``m + 1`` (cross
    path).  Noiseless simulators give exact parameters.
    """
    n = device.n_modes
    thetas = []
    for k, (_, m) in enumerate(clements_layout(n)):
        out = device.measure(single_cross_program(n, k), m)
        i_bar, i_cross = max(float(out[m]), 0.0), max(float(out[m + 1]), 0.0)
        thetas.append(theta_from_intensities(i_bar, i_cross, branch))
    return CalibrationResult(per_mzi_theta=np.array(thetas), evaluations=len(thetas))


# --- global method -------------------------------------------------------------

def probe_program(n: int, target_reflectivity: float = 0.2) -> PhaseProgram:
    """Balanced-mesh program with every MZI at the given reflectivity.

    Internal phases ``phi_i`` with ``sin^2(phi_i / 2) = target`` (near cross
    for small targets); external and output phases zero.
    """
    if not 0 <= target_reflectivity <= 1:
        raise ValueError("target reflectivity must lie in [0, 1]")
    phi = 2 * math.asin(math.sqrt(target_reflectivity))
    return PhaseProgram.uniform(n, phi, 0.0)


def probe_unitary(n: int, target_reflectivity: float = 0.2) -> np.ndarray:
    """Transfer matrix of :func:`probe_program` on an ideal mesh."""
    return reconstruct(probe_program(n, target_reflectivity), BALANCED)


def _r_bounds(r_guess: float, width: float = 0.3) -> tuple[float, float]:
    return max(R_MIN, r_guess - width), min(R_MAX, r_guess + width)


def global_objective(device, probe_reflectivity: float = 0.2, strategy: str = "recompile"):
    """Build ``f(r)``: squared distance between measured and expected intensities.

    ``strategy="recompile"``: compile the probe unitary for a uniform chip with
    reflectivity ``r``, run it on the device, and compare with the probe's
    intensities ``|U0|^2``; the mismatch vanishes when ``r`` is right.

    ``strategy="model"``: run the fixed balanced probe program once and compare
    with its simulation on a uniform-``r`` chip.

    Both sum over all ``N`` input ports (``N^2`` intensities).
    """
    n = device.n_modes
    program = probe_program(n, probe_reflectivity)
    if strategy == "recompile":
        U0 = reconstruct(program, BALANCED)
        expected = np.abs(U0) ** 2

        def f(r):
            th = theta_from_reflectivity(r)
            phi_i, phi_e, out = decompose_batch(U0[None], th)
            measured = device.measure_all(PhaseProgram(n, phi_i[0], phi_e[0], out[0]))
            return float(np.sum((measured - expected) ** 2))
    elif strategy == "model":
        measured = device.measure_all(program)

        def f(r):
            expected = np.abs(reconstruct(program, theta_from_reflectivity(r))) ** 2
            return float(np.sum((measured - expected) ** 2))
    else:
        raise ValueError("strategy must be 'recompile' or 'model'")
    return f


def calibrate_global(device, r_guess: float = 0.5, probe_reflectivity: float = 0.2,
                     strategy: str = "recompile", xatol: float = 1e-4,
                     width: float = 0.3) -> CalibrationResult:
    """Fit one reflectivity shared by all MZIs with bounded Brent minimisation.

    The search interval is ``[max(0.01, r_guess - width), min(0.99, r_guess + width)]``.

    Returns:
        A result whose ``trace`` lists every ``(r, f(r))`` evaluated and whose
        ``bracketed`` flag is False (with a warning) when the minimiser lands
        on an interval edge.
    """
    if not 0 < r_guess < 1:
        raise ValueError("r_guess must lie strictly between 0 and 1")
    f = global_objective(device, probe_reflectivity, strategy)
    trace: list[tuple[float, float]] = []

    def logged(r):
        value = f(r)
        trace.append((float(r), value))
        return value

    lo, hi = _r_bounds(r_guess, width)
    res = minimize_scalar(logged, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    r_best, f_best = min(trace, key=lambda p: p[1])
    bracketed = (r_best - lo) > 2 * xatol and (hi - r_best) > 2 * xatol
    if not bracketed:
        warnings.warn(f"global calibration minimum at interval edge r={r_best:.4f}; "
                      "widen the search or improve r_guess", RuntimeWarning, stacklevel=2)
    return CalibrationResult(global_theta=theta_from_reflectivity(r_best), evaluations=int(res.nfev),
                             residual=f_best, trace=trace, bracketed=bracketed)


__all__ = [
    "CalibrationResult", "calibrate_global", "calibrate_per_mzi", "global_objective",
    "probe_program", "probe_unitary", "single_cross_program", "theta_from_intensities",
]
