"""Unitary -> phase program compilation on a rectangular MZI mesh.

The decomposition nulls matrix elements in the Clements order, alternating
left multiplications by an MZI matrix and right multiplications by its
inverse.  Each nulling step uses the splitting parameter ``theta`` of the
physical MZI that will realise it, so imperfect beam-splitters are absorbed
into the phases.  When no internal phase can null an element (the required
MZI reflectivity is below ``cos^2(2 theta)``) the internal phase is clamped
to the nearest achievable setting and compilation continues.

The core routines work on stacks of matrices ``(B, n, n)``; the single
matrix API wraps them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import as_unitary
from .mesh import BALANCED, clements_layout, embed_two_mode, mzi_matrix

TWO_PI = 2 * np.pi
DEGENERATE_ATOL = 1e-12
# arg(0) branch of the correction term; equals the phi_i -> 0+ limit at theta = pi/4.
_ZERO_OVER_ZERO = -np.pi / 2


@dataclass(frozen=True)
class NullingStep:
    side: str  # "left": Z on rows (top, top+1); "right": Z^-1 on columns (top, top+1)
    row: int
    col: int
    top: int
    mzi: int  # index into clements_layout(n)


@lru_cache(maxsize=None)
def nulling_schedule(n: int) -> tuple[NullingStep, ...]:
    """Clements nulling order with the mesh position each step ends up at."""
    raw = []
    for i in range(1, n):
        if i % 2:
            for j in range(i):
                raw.append(("right", n - 1 - j, i - j - 1, i - j - 1))
        else:
            for j in range(1, i + 1):
                row = n + j - i - 1
                raw.append(("left", row, j - 1, row - 1))
    # Right factors act first on the light, then the (migrated) left factors
    # in reverse nulling order.
    order = [k for k, s in enumerate(raw) if s[0] == "right"]
    order += [k for k, s in enumerate(raw) if s[0] == "left"][::-1]
    depth = [0] * n
    position = {}
    for k in order:
        t = raw[k][3]
        layer = max(depth[t], depth[t + 1])
        if layer % 2 != t % 2:
            layer += 1
        depth[t] = depth[t + 1] = layer + 1
        position[k] = (layer, t)
    index = {p: i for i, p in enumerate(clements_layout(n))}
    if sorted(position.values()) != sorted(index):
        raise AssertionError(f"nulling order does not tile the rectangular mesh for n={n}")
    return tuple(NullingStep(*raw[k], index[position[k]]) for k in range(len(raw)))


# --- nulling phase formulas -------------------------------------------------

def _internal_phase(x, theta):
    """Internal phase giving cross amplitude ``x``; clamps when out of reach."""
    s = x / np.sin(2 * theta)
    phi_i = 2 * np.arccos(np.clip(s, -1.0, 1.0))
    phi_i = np.where(s >= 1, 0.0, phi_i)
    return np.where(s <= -1, TWO_PI, phi_i)


def _atan2_or_limit(num, den):
    both_zero = (np.abs(num) < DEGENERATE_ATOL) & (np.abs(den) < DEGENERATE_ATOL)
    return np.where(both_zero, _ZERO_OVER_ZERO, np.arctan2(num, den))


def left_nulling_phases(a, b, theta):
    """Phases of ``Z^theta`` that null ``b`` in the row pair ``(a, b)``.

    ``a`` and ``b`` are the column entries on rows ``n-1`` and ``n``.
    """
    a, b, theta = np.broadcast_arrays(np.asarray(a, complex), np.asarray(b, complex),
                                      np.asarray(theta, float))
    norm = np.hypot(np.abs(a), np.abs(b))
    degenerate = norm < DEGENERATE_ATOL
    x = np.abs(b) / np.where(degenerate, 1.0, norm)
    phi_i = _internal_phase(x, theta)
    c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    corr = _atan2_or_limit(-s2 * np.sin(phi_i), c2 - s2 * np.cos(phi_i))
    phi_e = -(np.angle(a) - np.angle(b)) + np.pi / 2 - phi_i / 2 + corr
    phi_i = np.where(degenerate, np.pi, phi_i)
    phi_e = np.where(degenerate, 0.0, np.mod(phi_e, TWO_PI))
    return phi_i, phi_e


def right_nulling_phases(a, b, theta):
    """Phases of ``Z^theta`` whose inverse, applied on the right, nulls ``a``.

    ``a`` and ``b`` are the row entries in columns ``m`` and ``m+1``.
    """
    a, b, theta = np.broadcast_arrays(np.asarray(a, complex), np.asarray(b, complex),
                                      np.asarray(theta, float))
    norm = np.hypot(np.abs(a), np.abs(b))
    degenerate = norm < DEGENERATE_ATOL
    x = np.abs(a) / np.where(degenerate, 1.0, norm)
    phi_i = _internal_phase(x, theta)
    c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    corr = _atan2_or_limit(-c2 * np.sin(phi_i), c2 * np.cos(phi_i) - s2)
    phi_e = -(np.angle(b) - np.angle(a)) - np.pi / 2 + phi_i / 2 + corr
    phi_i = np.where(degenerate, np.pi, phi_i)
    phi_e = np.where(degenerate, 0.0, np.mod(phi_e, TWO_PI))
    return phi_i, phi_e


def ideal_left_nulling_phases(a, b):
    """Balanced-MZI formulas: ``phi_i = 2 atan|a/b|``, ``phi_e = -arg(a/b)``."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    degenerate = np.hypot(np.abs(a), np.abs(b)) < DEGENERATE_ATOL
    phi_i = np.where(degenerate, np.pi, 2 * np.arctan2(np.abs(a), np.abs(b)))
    phi_e = np.where(degenerate, 0.0, np.mod(np.angle(b) - np.angle(a), TWO_PI))
    return phi_i, phi_e


def ideal_right_nulling_phases(a, b):
    """Balanced-MZI formulas: ``phi_i = 2 atan|b/a|``, ``phi_e = pi - arg(b/a)``."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    degenerate = np.hypot(np.abs(a), np.abs(b)) < DEGENERATE_ATOL
    phi_i = np.where(degenerate, np.pi, 2 * np.arctan2(np.abs(b), np.abs(a)))
    phi_e = np.where(degenerate, 0.0, np.mod(np.angle(a) - np.angle(b) + np.pi, TWO_PI))
    return phi_i, phi_e


def null_with_Z(U, m: int, n: int, theta: float = BALANCED):
    """Null ``U[n, m]`` by left-multiplying ``Z^theta`` on rows ``n-1, n``.

    Returns:
        ``(phi_i, phi_e, updated)`` where ``updated = Z_[n-1] @ U``.
    """
    U = np.asarray(U, dtype=complex)
    N = U.shape[0]
    if not (1 <= n < N and 0 <= m < U.shape[1]):
        raise ValueError(f"element ({n}, {m}) cannot be nulled with rows ({n - 1}, {n})")
    phi_i, phi_e = left_nulling_phases(U[n - 1, m], U[n, m], theta)
    Z = mzi_matrix(phi_i, phi_e, theta)
    return float(phi_i), float(phi_e), embed_two_mode(Z, n - 1, N) @ U


def null_with_Zinv(U, m: int, n: int, theta: float = BALANCED):
    """Null ``U[n, m]`` by right-multiplying ``(Z^theta)^-1`` on columns ``m, m+1``.

    Returns:
        ``(phi_i, phi_e, updated)`` where ``updated = U @ Z_[m]^-1``.
    """
    U = np.asarray(U, dtype=complex)
    N = U.shape[1]
    if not (0 <= m < N - 1 and 0 <= n < U.shape[0]):
        raise ValueError(f"element ({n}, {m}) cannot be nulled with columns ({m}, {m + 1})")
    phi_i, phi_e = right_nulling_phases(U[n, m], U[n, m + 1], theta)
    Z = mzi_matrix(phi_i, phi_e, theta)
    return float(phi_i), float(phi_e), U @ embed_two_mode(Z.conj().T, m, N)


def commute_inverse_through_diagonal(phi_i, phi_e, d_top, d_bottom):
    """Solve ``Z^-1(phi_i, phi_e) diag(d_top, d_bottom) = D' Z(phi_i', phi_e')``.

    Holds for every beam-splitter ``theta`` because ``B^H = R(pi) B R(pi)``.
    ``d_top`` and ``d_bottom`` are unit-modulus phases (complex).

    Returns:
        ``(phi_i', phi_e', (d_top', d_bottom'))``.
    """
    phi_i2 = TWO_PI - np.asarray(phi_i, dtype=float)
    phi_e2 = np.mod(np.pi + np.angle(d_top) - np.angle(d_bottom), TWO_PI)
    new_top = d_bottom * np.exp(1j * (np.pi - np.asarray(phi_e, dtype=float)))
    return phi_i2, phi_e2, (new_top, d_bottom)


# --- programs ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseProgram:
    """Phases for every MZI (layer-major order) plus the output diagonal.

    The programmed transformation is
    ``diag(exp(1j*output_phases)) @ Z_{M-1} @ ... @ Z_0`` with ``Z_k`` the
    embedded MZI ``k``.
    """

    n_modes: int
    phi_i: np.ndarray
    phi_e: np.ndarray
    output_phases: np.ndarray

    def __post_init__(self):
        n = self.n_modes
        m = n * (n - 1) // 2
        for name, size in (("phi_i", m), ("phi_e", m), ("output_phases", n)):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (size,):
                raise ValueError(f"{name} needs {size} entries, got {arr.size}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_mzis(self) -> int:
        return self.phi_i.size

    @property
    def settings(self) -> list[tuple[int, float, float]]:
        return [(k, float(a), float(b)) for k, (a, b) in enumerate(zip(self.phi_i, self.phi_e))]

    @classmethod
    def uniform(cls, n: int, phi_i: float, phi_e: float = 0.0) -> "PhaseProgram":
        m = n * (n - 1) // 2
        return cls(n, np.full(m, phi_i), np.full(m, phi_e), np.zeros(n))

    def replace(self, phi_i=None, phi_e=None, output_phases=None) -> "PhaseProgram":
        return PhaseProgram(
            self.n_modes,
            self.phi_i if phi_i is None else phi_i,
            self.phi_e if phi_e is None else phi_e,
            self.output_phases if output_phases is None else output_phases,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n_modes,
            "settings": [{"mzi": k, "phi_i": a, "phi_e": b} for k, a, b in self.settings],
            "output_phases": [float(x) for x in self.output_phases],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PhaseProgram":
        try:
            n = int(obj["n"])
            m = n * (n - 1) // 2
            phi_i = np.full(m, np.nan)
            phi_e = np.full(m, np.nan)
            for s in obj["settings"]:
                k = int(s["mzi"])
                if not 0 <= k < m:
                    raise ValueError(f"MZI index {k} out of range for n={n}")
                phi_i[k] = float(s["phi_i"])
                phi_e[k] = float(s["phi_e"])
            out = [float(x) for x in obj["output_phases"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed program file: {exc!r}") from exc
        if np.isnan(phi_i).any():
            raise ValueError("program does not set every MZI")
        return cls(n, phi_i, phi_e, np.array(out))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PhaseProgram":
        return cls.from_dict(json.loads(text))


def _thetas_for(n: int, thetas, batch: int) -> np.ndarray:
    m = n * (n - 1) // 2
    if thetas is None:
        thetas = BALANCED
    t = np.asarray(thetas, dtype=float)
    if t.ndim == 0:
        t = np.full(m, float(t))
    if t.shape[-1] != m:
        raise ValueError(f"need {m} beam-splitter parameters for n={n}, got {t.shape[-1]}")
    if np.any((t <= 0) | (t >= np.pi / 2)):
        raise ValueError("beam-splitter parameters must lie in (0, pi/2)")
    return np.broadcast_to(t, (batch, m))


def decompose_batch(Us, thetas=None, *, rule: str = "tailored"):
    """Compile a stack of unitaries.

    Args:
        Us: ``(B, n, n)`` complex array (not validated; callers check unitarity).
        thetas: ``None`` (balanced), a scalar, ``(M,)`` or ``(B, M)`` per-MZI
            beam-splitter parameters in layer-major order.
        rule: ``"tailored"`` uses the imperfect-MZI nulling equations,
            ``"ideal"`` the balanced-MZI ones (``thetas`` must then be balanced
            for the result to be meaningful).

    Returns:
        ``(phi_i, phi_e, output_phases)`` arrays of shapes ``(B, M)``,
        ``(B, M)`` and ``(B, n)``, with ``phi_i`` in ``[0, 2 pi]`` and the
        other phases in ``[0, 2 pi)``.
    """
    W = np.array(Us, dtype=complex)
    if W.ndim != 3 or W.shape[1] != W.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {W.shape}")
    B, n, _ = W.shape
    th = _thetas_for(n, thetas, B)
    m = n * (n - 1) // 2
    phi_i = np.empty((B, m))
    phi_e = np.empty((B, m))
    schedule = nulling_schedule(n)
    for step in schedule:
        t = th[:, step.mzi]
        if step.side == "left":
            r = step.top
            a, b = W[:, r, step.col], W[:, r + 1, step.col]
            if rule == "ideal":
                pi_, pe = ideal_left_nulling_phases(a, b)
            else:
                pi_, pe = left_nulling_phases(a, b, t)
            W[:, r:r + 2, :] = mzi_matrix(pi_, pe, t) @ W[:, r:r + 2, :]
        else:
            c = step.top
            a, b = W[:, step.row, c], W[:, step.row, c + 1]
            if rule == "ideal":
                pi_, pe = ideal_right_nulling_phases(a, b)
            else:
                pi_, pe = right_nulling_phases(a, b, t)
            Zinv = np.swapaxes(mzi_matrix(pi_, pe, t).conj(), -1, -2)
            W[:, :, c:c + 2] = W[:, :, c:c + 2] @ Zinv
        phi_i[:, step.mzi] = pi_
        phi_e[:, step.mzi] = pe
    # Off-diagonal residue left by clamped steps is dropped here.
    d = np.exp(1j * np.angle(np.diagonal(W, axis1=1, axis2=2)))
    for step in reversed(schedule):
        if step.side != "left":
            continue
        k, t = step.mzi, step.top
        phi_i[:, k], phi_e_new, (d[:, t], d[:, t + 1]) = commute_inverse_through_diagonal(
            phi_i[:, k], phi_e[:, k], d[:, t], d[:, t + 1])
        phi_e[:, k] = phi_e_new
    return phi_i, np.mod(phi_e, TWO_PI), np.mod(np.angle(d), TWO_PI)


def reconstruct_batch(phi_i, phi_e, output_phases, thetas=None) -> np.ndarray:
    """Transfer matrices of programs run on MZIs with parameters ``thetas``."""
    phi_i = np.atleast_2d(np.asarray(phi_i, dtype=float))
    phi_e = np.atleast_2d(np.asarray(phi_e, dtype=float))
    out = np.atleast_2d(np.asarray(output_phases, dtype=float))
    B, n = out.shape
    th = _thetas_for(n, thetas, B)
    if phi_i.shape != th.shape or phi_e.shape != th.shape:
        raise ValueError(f"phase arrays {phi_i.shape}/{phi_e.shape} do not match mesh {th.shape}")
    Z = mzi_matrix(phi_i, phi_e, th)
    U = np.broadcast_to(np.eye(n, dtype=complex), (B, n, n)).copy()
    for k, (_, t) in enumerate(clements_layout(n)):
        U[:, t:t + 2, :] = Z[:, k] @ U[:, t:t + 2, :]
    return U * np.exp(1j * out)[:, :, None]


def decompose(U, thetas=None) -> PhaseProgram:
    """Tailored decomposition of one unitary.

    ``thetas=None`` (all balanced) gives the standard Clements program.
    Infeasible nulling steps are clamped, not reported as errors.
    """
    U = as_unitary(U)
    phi_i, phi_e, out = decompose_batch(U[None], thetas)
    return PhaseProgram(U.shape[0], phi_i[0], phi_e[0], out[0])


def decompose_ideal(U) -> PhaseProgram:
    """Balanced-MZI Clements program computed with the ideal nulling formulas."""
    U = as_unitary(U)
    phi_i, phi_e, out = decompose_batch(U[None], None, rule="ideal")
    return PhaseProgram(U.shape[0], phi_i[0], phi_e[0], out[0])


def reconstruct(program: PhaseProgram, thetas=None) -> np.ndarray:
    """Transfer matrix of ``program`` on MZIs with the given ``thetas``."""
    return reconstruct_batch(program.phi_i, program.phi_e, program.output_phases, thetas)[0]


def count_clamped(U, thetas) -> int:
    """Number of nulling steps that could not be met exactly."""
    W = np.array(as_unitary(U), dtype=complex)
    n = W.shape[0]
    th = _thetas_for(n, thetas, 1)[0]
    clamped = 0
    for step in nulling_schedule(n):
        t = th[step.mzi]
        if step.side == "left":
            a, b = W[step.top, step.col], W[step.top + 1, step.col]
            x = abs(b) / max(np.hypot(abs(a), abs(b)), DEGENERATE_ATOL)
            pi_, pe = left_nulling_phases(a, b, t)
            W[step.top:step.top + 2] = mzi_matrix(pi_, pe, t) @ W[step.top:step.top + 2]
        else:
            a, b = W[step.row, step.top], W[step.row, step.top + 1]
            x = abs(a) / max(np.hypot(abs(a), abs(b)), DEGENERATE_ATOL)
            pi_, pe = right_nulling_phases(a, b, t)
            W[:, step.top:step.top + 2] = W[:, step.top:step.top + 2] @ mzi_matrix(pi_, pe, t).conj().T
        clamped += int(x / np.sin(2 * t) > 1)
    return clamped
