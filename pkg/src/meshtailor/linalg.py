"""Dense complex matrix helpers: Haar sampling, permutations, distances.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Functions that
take a stack of matrices accept any leading batch shape ``(..., n, n)``.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

UNITARY_ATOL = 1e-10


def is_unitary(U: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    """Return True if ``||U^H U - I||_F <= atol``."""
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] == 0:
        return False
    if not np.all(np.isfinite(U)):
        return False
    err = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))
    return bool(err <= atol)


def as_unitary(U, atol: float = UNITARY_ATOL) -> np.ndarray:
    """Validate and return ``U`` as a complex square unitary array.

    Raises:
        ValueError: if ``U`` is not square, contains non-finite entries, or
            deviates from unitarity by more than ``atol`` (Frobenius norm).
    """
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] == 0:
        raise ValueError(f"expected a non-empty square matrix, got shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValueError("matrix has non-finite entries")
    err = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))
    if err > atol:
        raise ValueError(f"matrix is not unitary: ||U^H U - I||_F = {err:.3e} > {atol:.1e}")
    return U


def haar_random_unitary(n: int, seed=None) -> np.ndarray:
    """Sample an ``n x n`` unitary from the Haar measure.

    QR-decomposes a matrix of i.i.d. standard complex Gaussians and divides
    the phases of R's diagonal out of Q (Mezzadri's construction).

    Args:
        n: Matrix dimension, ``n >= 1``.
        seed: Anything accepted by :func:`numpy.random.default_rng`, including
            an existing ``Generator``.
    """
    return haar_random_unitaries(n, 1, seed)[0]


def haar_random_unitaries(n: int, count: int, seed=None) -> np.ndarray:
    """Stack of ``count`` independent Haar unitaries, shape ``(count, n, n)``."""
    if n < 1:
        raise ValueError(f"invalid dimension n={n}; need n >= 1")
    rng = np.random.default_rng(seed)
    Z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]


def fidelity_distance(U_t, U_r) -> float | np.ndarray:
    """``|| |U_t U_r^H| - I ||_F`` with ``|.|`` taken entrywise.

    Zero iff ``U_r`` equals ``U_t`` up to a diagonal of output phases.
    Batched inputs ``(..., n, n)`` return an array of distances.
    """
    U_t = np.asarray(U_t)
    U_r = np.asarray(U_r)
    if U_t.shape[-2:] != U_r.shape[-2:] or U_t.shape[-1] != U_t.shape[-2]:
        raise ValueError(f"dimension mismatch: {U_t.shape} vs {U_r.shape}")
    n = U_t.shape[-1]
    M = np.abs(U_t @ np.swapaxes(U_r.conj(), -1, -2)) - np.eye(n)
    d = np.sqrt(np.sum(M * M, axis=(-2, -1)))
    return float(d) if d.ndim == 0 else d


# Permutations are tuples with mapping[j] = image of j (0-based).

def check_permutation(p: Sequence[int], n: int | None = None) -> tuple[int, ...]:
    p = tuple(int(x) for x in p)
    if n is not None and len(p) != n:
        raise ValueError(f"permutation has length {len(p)}, expected {n}")
    if sorted(p) != list(range(len(p))):
        raise ValueError(f"not a permutation of 0..{len(p) - 1}: {p}")
    return p


def identity_permutation(n: int) -> tuple[int, ...]:
    return tuple(range(n))


def inverse_permutation(p: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(p)
    for j, pj in enumerate(p):
        inv[pj] = j
    return tuple(inv)


def compose(p: Sequence[int], q: Sequence[int]) -> tuple[int, ...]:
    """Return ``p o q``, i.e. ``j -> p[q[j]]``."""
    return tuple(p[qj] for qj in q)


def transposition(n: int, j: int) -> tuple[int, ...]:
    """Nearest-neighbour swap of ``j`` and ``j + 1``."""
    if not 0 <= j < n - 1:
        raise ValueError(f"transposition index {j} out of range for n={n}")
    p = list(range(n))
    p[j], p[j + 1] = p[j + 1], p[j]
    return tuple(p)


def permutation_matrix(p: Sequence[int]) -> np.ndarray:
    """0/1 matrix with ``P @ e_j = e_{p[j]}``."""
    p = check_permutation(p)
    n = len(p)
    P = np.zeros((n, n))
    P[list(p), list(range(n))] = 1.0
    return P


# File formats

def matrix_to_json(U: np.ndarray) -> str:
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {U.shape}")
    return json.dumps({"n": U.shape[0], "re": U.real.tolist(), "im": U.imag.tolist()})


def matrix_from_json(text: str) -> np.ndarray:
    """Parse ``{"n": int, "re": [[...]], "im": [[...]]}``.

    Raises:
        ValueError: on malformed content (``json.JSONDecodeError`` is a subclass).
    """
    obj = json.loads(text)
    try:
        n = int(obj["n"])
        U = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix file: {exc}") from exc
    if U.shape != (n, n):
        raise ValueError(f"matrix file declares n={n} but holds shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValueError("matrix file has non-finite entries")
    return U


def matrix_csv_rows(U: np.ndarray) -> list[list[float]]:
    """Rows with interleaved real/imaginary columns: ``re0, im0, re1, im1, ...``."""
    U = np.asarray(U, dtype=complex)
    out = np.empty((U.shape[0], 2 * U.shape[1]))
    out[:, 0::2] = U.real
    out[:, 1::2] = U.imag
    return out.tolist()
