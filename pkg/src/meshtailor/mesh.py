"""Physical model of a rectangular Mach-Zehnder mesh.

Conventions
-----------
* A beam-splitter with parameter ``theta`` has reflectivity ``cos(theta)**2``.
* An MZI is ``B(theta) R(phi_i) B(theta) R(phi_e)`` with
  ``R(phi) = diag(exp(1j*phi), 1)``, i.e. the external shifter sits on the
  top input arm.
* Layer ``l`` (0-based) of an ``n``-mode mesh holds MZIs on mode pairs
  ``(m, m+1)`` with ``m = l (mod 2)``; there are ``n`` layers and
  ``n(n-1)/2`` MZIs.  MZIs are indexed in layer-major order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

BALANCED = np.pi / 4


def theta_from_reflectivity(r):
    """Beam-splitter parameter for reflectivity ``r = cos(theta)**2``."""
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r >= 1)):
        raise ValueError("reflectivity must lie strictly between 0 and 1")
    out = np.arccos(np.sqrt(r))
    return float(out) if out.ndim == 0 else out


def reflectivity_from_theta(theta):
    out = np.cos(np.asarray(theta, dtype=float)) ** 2
    return float(out) if out.ndim == 0 else out


def _check_theta(theta) -> None:
    t = np.asarray(theta)
    if np.any((t <= 0) | (t >= np.pi / 2)):
        raise ValueError("beam-splitter parameter theta must lie in (0, pi/2)")


def beam_splitter(theta: float) -> np.ndarray:
    """``[[cos t, i sin t], [i sin t, cos t]]``."""
    _check_theta(theta)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 1j * s], [1j * s, c]])


def phase_shifter(phi: float) -> np.ndarray:
    """``diag(exp(i phi), 1)``."""
    return np.array([[np.exp(1j * phi), 0], [0, 1]], dtype=complex)


def mzi_matrix(phi_i, phi_e, theta=BALANCED) -> np.ndarray:
    """Transfer matrix of an MZI whose two beam-splitters share ``theta``.

    All arguments broadcast; the result has shape ``broadcast_shape + (2, 2)``.
    At ``theta = pi/4`` this is the ideal MZI.
    """
    phi_i, phi_e, theta = np.broadcast_arrays(
        np.asarray(phi_i, dtype=float), np.asarray(phi_e, dtype=float), np.asarray(theta, dtype=float))
    c2 = np.cos(theta) ** 2
    s2 = np.sin(theta) ** 2
    ei = np.exp(1j * phi_i)
    ee = np.exp(1j * phi_e)
    off = 1j * np.exp(0.5j * phi_i) * np.cos(phi_i / 2) * np.sin(2 * theta)
    Z = np.empty(phi_i.shape + (2, 2), dtype=complex)
    Z[..., 0, 0] = ee * (ei * c2 - s2)
    Z[..., 0, 1] = off
    Z[..., 1, 0] = ee * off
    Z[..., 1, 1] = c2 - ei * s2
    return Z


def mzi_reflectivity(phi_i, theta=BALANCED):
    """Power fraction that stays in its arm: ``1 - sin^2(2 theta) cos^2(phi_i / 2)``."""
    out = 1 - np.sin(2 * np.asarray(theta)) ** 2 * np.cos(np.asarray(phi_i) / 2) ** 2
    return float(out) if np.ndim(out) == 0 else out


def embed_two_mode(Z: np.ndarray, m: int, n: int) -> np.ndarray:
    """Identity on ``n`` modes with ``Z`` placed on modes ``m, m+1``."""
    if not 0 <= m <= n - 2:
        raise ValueError(f"mode index {m} out of range for {n} modes")
    Z = np.asarray(Z)
    if Z.shape != (2, 2):
        raise ValueError(f"expected a 2x2 block, got {Z.shape}")
    out = np.eye(n, dtype=complex)
    out[m:m + 2, m:m + 2] = Z
    return out


@lru_cache(maxsize=None)
def clements_layout(n: int) -> tuple[tuple[int, int], ...]:
    """``(layer, top_mode)`` of every MZI of the rectangular mesh, layer-major."""
    return tuple((layer, m) for layer in range(n) for m in range(layer % 2, n - 1, 2))


@dataclass(frozen=True)
class PhaseShifterCal:
    """Phase-voltage relation ``phi = alpha + beta * V**2``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class MZIUnit:
    theta: float
    layer: int
    top_mode: int

    def __post_init__(self):
        _check_theta(self.theta)

    @property
    def reflectivity(self) -> float:
        return math.cos(self.theta) ** 2


@dataclass(frozen=True, eq=False)
class ChipSpec:
    """Mesh topology, per-MZI splitting ratio and per-shifter calibration.

    Attributes:
        n_modes: Number of optical modes.
        reflectivities: ``(M,)`` beam-splitter reflectivities, one per MZI.
        internal_cal: ``(M, 2)`` ``(alpha, beta)`` of each internal shifter.
        external_cal: ``(M, 2)`` ``(alpha, beta)`` of each external shifter.
        output_cal: ``(n, 2)`` ``(alpha, beta)`` of the output shifters.
    """

    n_modes: int
    reflectivities: np.ndarray
    internal_cal: np.ndarray
    external_cal: np.ndarray
    output_cal: np.ndarray

    def __post_init__(self):
        n = self.n_modes
        if n < 1:
            raise ValueError("a chip needs at least one mode")
        m = n * (n - 1) // 2
        for name, shape in [("reflectivities", (m,)), ("internal_cal", (m, 2)),
                            ("external_cal", (m, 2)), ("output_cal", (n, 2))]:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any((self.reflectivities <= 0) | (self.reflectivities >= 1)):
            raise ValueError("reflectivities must lie strictly between 0 and 1")
        for name in ("internal_cal", "external_cal", "output_cal"):
            if np.any(getattr(self, name)[:, 1] <= 0):
                raise ValueError(f"{name}: every beta must be positive")

    @classmethod
    def uniform(cls, n: int, reflectivity: float = 0.5, alpha: float = 0.0, beta: float = 1.0) -> "ChipSpec":
        m = n * (n - 1) // 2
        return cls(n, np.full(m, reflectivity), np.tile([alpha, beta], (m, 1)),
                   np.tile([alpha, beta], (m, 1)), np.tile([alpha, beta], (n, 1)))

    def with_reflectivities(self, reflectivities) -> "ChipSpec":
        r = np.broadcast_to(np.asarray(reflectivities, dtype=float), (self.n_mzis,))
        return ChipSpec(self.n_modes, r, self.internal_cal, self.external_cal, self.output_cal)

    @property
    def n_mzis(self) -> int:
        return self.n_modes * (self.n_modes - 1) // 2

    @property
    def positions(self) -> tuple[tuple[int, int], ...]:
        return clements_layout(self.n_modes)

    @cached_property
    def thetas(self) -> np.ndarray:
        t = np.arccos(np.sqrt(self.reflectivities))
        t.setflags(write=False)
        return t

    @property
    def mzis(self) -> list[MZIUnit]:
        return [MZIUnit(float(t), layer, m) for t, (layer, m) in zip(self.thetas, self.positions)]

    def shifter_cals(self) -> dict[str, list[PhaseShifterCal]]:
        def conv(a):
            return [PhaseShifterCal(float(x), float(y)) for x, y in a]
        return {"internal": conv(self.internal_cal), "external": conv(self.external_cal),
                "output": conv(self.output_cal)}

    def to_dict(self) -> dict:
        mzis = []
        for k, (layer, m) in enumerate(self.positions):
            mzis.append({
                "layer": layer,
                "top_mode": m,
                "reflectivity": float(self.reflectivities[k]),
                "internal": {"alpha": float(self.internal_cal[k, 0]), "beta": float(self.internal_cal[k, 1])},
                "external": {"alpha": float(self.external_cal[k, 0]), "beta": float(self.external_cal[k, 1])},
            })
        return {
            "n": self.n_modes,
            "mzis": mzis,
            "output_shifters": [{"alpha": float(a), "beta": float(b)} for a, b in self.output_cal],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ChipSpec":
        try:
            n = int(obj["n"])
            layout = clements_layout(n)
            entries = obj["mzis"]
            if len(entries) != len(layout):
                raise ValueError(f"chip with n={n} needs {len(layout)} MZIs, file has {len(entries)}")
            by_pos = {}
            for e in entries:
                by_pos[(int(e["layer"]), int(e["top_mode"]))] = e
            if set(by_pos) != set(layout):
                raise ValueError("MZI positions do not match the rectangular layout")
            rows = [by_pos[p] for p in layout]
            refl = [float(e["reflectivity"]) for e in rows]
            internal = [[float(e["internal"]["alpha"]), float(e["internal"]["beta"])] for e in rows]
            external = [[float(e["external"]["alpha"]), float(e["external"]["beta"])] for e in rows]
            out = [[float(e["alpha"]), float(e["beta"])] for e in obj["output_shifters"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed chip file: {exc!r}") from exc
        m = len(layout)
        return cls(n, np.array(refl).reshape(m), np.array(internal).reshape(m, 2),
                   np.array(external).reshape(m, 2), np.array(out).reshape(n, 2))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ChipSpec":
        return cls.from_dict(json.loads(text))


def _normal_mass_inside(mean: float, sd: float, lo: float = 0.0, hi: float = 1.0) -> float:
    if sd == 0:
        return float(lo < mean < hi)
    cdf = lambda x: 0.5 * (1 + math.erf((x - mean) / (sd * math.sqrt(2))))
    return cdf(hi) - cdf(lo)


def sample_chip(n: int, reflectivity_mean: float = 0.5, reflectivity_sd: float = 0.0,
                beta_range: tuple[float, float] = (0.5, 2.0), seed=None) -> ChipSpec:
    """Draw a synthetic chip.

    Reflectivities are normal(mean, sd) truncated to (0, 1) by rejection;
    every offset ``alpha`` is uniform on [0, 2 pi) and every slope ``beta``
    log-uniform over ``beta_range``.
    """
    if n < 2:
        raise ValueError("a mesh needs at least two modes")
    if reflectivity_sd < 0:
        raise ValueError("reflectivity_sd must be non-negative")
    if _normal_mass_inside(reflectivity_mean, reflectivity_sd) < 1e-3:
        raise ValueError(f"normal({reflectivity_mean}, {reflectivity_sd}) essentially never "
                         "yields a reflectivity in (0, 1)")
    lo, hi = beta_range
    if not 0 < lo <= hi:
        raise ValueError("beta_range must be positive and ordered")
    rng = np.random.default_rng(seed)
    m = n * (n - 1) // 2
    refl = rng.normal(reflectivity_mean, reflectivity_sd, m)
    bad = (refl <= 0) | (refl >= 1)
    while np.any(bad):
        refl[bad] = rng.normal(reflectivity_mean, reflectivity_sd, int(bad.sum()))
        bad = (refl <= 0) | (refl >= 1)

    def cal(k):
        alpha = rng.uniform(0, 2 * np.pi, k)
        beta = np.exp(rng.uniform(np.log(lo), np.log(hi), k))
        return np.column_stack([alpha, beta])

    return ChipSpec(n, refl, cal(m), cal(m), cal(n))
