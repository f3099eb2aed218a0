"""Port allocation: choose input/output relabelings ``(pi, sigma)`` so that the
chip implements ``Q U P`` with a better objective value.

``P = permutation_matrix(pi)`` and ``Q = permutation_matrix(sigma)``.  Light
the user wanted in input port ``j`` is injected at ``pi^-1(j)``; the count
read at detector ``sigma(k)`` is reported to the user as output ``k``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .compiler import decompose_batch, reconstruct_batch
from .linalg import (check_permutation, compose, fidelity_distance, identity_permutation,
                     permutation_matrix)
from .mesh import ChipSpec
from .power import power_batch

Objective = Callable[[np.ndarray], np.ndarray]
"""Maps a stack ``(B, n, n)`` of candidate unitaries to ``(B,)`` values; lower is better."""


# --- objectives ----------------------------------------------------------------

class MinPower:
    """Total power of the balanced (Clements) program on ``chip``."""

    def __init__(self, chip: ChipSpec, include_output: bool = True):
        self.chip = chip
        self.include_output = include_output

    def power(self, Us: np.ndarray) -> np.ndarray:
        return power_batch(*decompose_batch(Us), self.chip, self.include_output)

    def __call__(self, Us):
        return self.power(Us)


class TargetPower(MinPower):
    """``|power - target|``."""

    def __init__(self, chip: ChipSpec, target: float, include_output: bool = True):
        super().__init__(chip, include_output)
        self.target = float(target)

    def __call__(self, Us):
        return np.abs(self.power(Us) - self.target)


class MinDistance:
    """Predicted fidelity distance on a chip model with parameters ``thetas``.

    Args:
        thetas: Believed per-MZI beam-splitter parameters (scalar or ``(M,)``).
        tailored: Compile with ``thetas`` (True) or with balanced MZIs (False).
        floor: Distances below this count as exactly zero, so allocations
            that are already exact tie and the lexicographic tie-break
            prefers the least relabeling.
    """

    def __init__(self, thetas, tailored: bool = True, floor: float = 1e-10):
        self.thetas = thetas
        self.tailored = tailored
        self.floor = floor

    def __call__(self, Us):
        phases = decompose_batch(Us, self.thetas if self.tailored else None)
        d = fidelity_distance(Us, reconstruct_batch(*phases, self.thetas))
        return np.where(d < self.floor, 0.0, d)


# --- results -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Allocation:
    p_in: tuple[int, ...]
    q_out: tuple[int, ...]
    permuted_unitary: np.ndarray
    objective_value: float
    baseline_value: float
    evaluations: int
    threshold_met: bool | None = None

    def to_dict(self) -> dict:
        # 1-based port labels on disk
        return {"p_in": [p + 1 for p in self.p_in], "q_out": [q + 1 for q in self.q_out],
                "objective": self.objective_value}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def permutations_from_dict(obj: dict) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (check_permutation([p - 1 for p in obj["p_in"]]),
                check_permutation([q - 1 for q in obj["q_out"]]))


class TranspositionClasses(NamedTuple):
    """Lower indices ``j`` (0-based) of nearest-neighbour swaps ``(j, j+1)``."""

    trivial_in: tuple[int, ...]
    nontrivial_in: tuple[int, ...]
    trivial_out: tuple[int, ...]
    nontrivial_out: tuple[int, ...]


def classify_transpositions(n: int) -> TranspositionClasses:
    """Split nearest-neighbour port swaps into trivial and non-trivial ones.

    A swap is trivial when the two ports meet at the same MZI of the first
    (inputs) or last (outputs) mesh layer.
    """
    if n < 2:
        raise ValueError("need at least two modes")
    js = range(n - 1)
    first = {m for (layer, m) in _edge_layers(n)[0]}
    last = {m for (layer, m) in _edge_layers(n)[1]}
    return TranspositionClasses(
        tuple(j for j in js if j in first), tuple(j for j in js if j not in first),
        tuple(j for j in js if j in last), tuple(j for j in js if j not in last),
    )


def _edge_layers(n: int):
    first = [(0, m) for m in range(0, n - 1, 2)]
    last = [(n - 1, m) for m in range((n - 1) % 2, n - 1, 2)]
    return first, last


# --- permutation helpers ----------------------------------------------------------

def apply_allocation(U, p_in: Sequence[int], q_out: Sequence[int]) -> np.ndarray:
    """``Q @ U @ P``."""
    U = np.asarray(U)
    n = U.shape[-1]
    p_in = check_permutation(p_in, n)
    q_out = check_permutation(q_out, n)
    return permutation_matrix(q_out) @ U @ permutation_matrix(p_in)


def _permuted_stack(U: np.ndarray, pis: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    # (Q U P)[r, c] = U[sigma^-1(r), pi(c)]
    sig_inv = np.argsort(sigmas, axis=1)
    return U[sig_inv[:, :, None], pis[:, None, :]]


def _lex_argmin(values: np.ndarray, pis: np.ndarray, sigmas: np.ndarray) -> int:
    best = values.min()
    idx = np.flatnonzero(values == best)
    if idx.size == 1:
        return int(idx[0])
    keys = [tuple(pis[i]) + tuple(sigmas[i]) for i in idx]
    return int(idx[min(range(len(idx)), key=keys.__getitem__)])


def _evaluate(U, objective, pis, sigmas, batch_size):
    values = np.empty(len(pis))
    for start in range(0, len(pis), batch_size):
        sl = slice(start, start + batch_size)
        values[sl] = objective(_permuted_stack(U, pis[sl], sigmas[sl]))
    return values


def _result(U, pi, sigma, value, baseline, evaluations, threshold=None) -> Allocation:
    pi, sigma = tuple(int(x) for x in pi), tuple(int(x) for x in sigma)
    met = None if threshold is None else bool(value <= threshold)
    return Allocation(pi, sigma, apply_allocation(U, pi, sigma), float(value), float(baseline),
                      evaluations, met)


# --- searches --------------------------------------------------------------------

def unrestricted_search(U, objective: Objective, max_modes: int = 6, batch_size: int = 4096) -> Allocation:
    """Exact minimiser over all ``(n!)^2`` allocations.

    Ties resolve to the lexicographically smallest ``(pi, sigma)``.

    Raises:
        ValueError: if ``n > max_modes``; use :func:`sweep_search` instead.
    """
    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    if n > max_modes:
        raise ValueError(f"unrestricted search over ({n}!)^2 allocations refused for n={n} > {max_modes}; "
                         "use sweep_search or randomized_search, or raise max_modes")
    perms = np.array(list(itertools.permutations(range(n))))
    K = len(perms)
    best_val, best_idx = np.inf, 0
    baseline = None
    total = K * K
    for start in range(0, total, batch_size):
        flat = np.arange(start, min(start + batch_size, total))
        vals = objective(_permuted_stack(U, perms[flat // K], perms[flat % K]))
        if baseline is None:
            baseline = vals[0]  # flat index 0 is the identity pair
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_idx = vals[i], int(flat[i])
    return _result(U, perms[best_idx // K], perms[best_idx % K], best_val, baseline, total)


def randomized_search(U, objective: Objective, max_candidates: int = 1000, threshold: float | None = None,
                      seed=None, batch_size: int = 256) -> Allocation:
    """Uniformly random allocations (numpy's Fisher-Yates shuffle).

    Candidate 0 is the identity.  Returns the first candidate whose value is
    ``<= threshold``; otherwise the best seen, with ``threshold_met=False``.
    A threshold of ``None`` or ``inf`` disables early stopping.
    """
    early = threshold is not None and np.isfinite(threshold)
    if max_candidates < 1:
        raise ValueError("max_candidates must be positive")
    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    rng = np.random.default_rng(seed)
    pis = np.empty((max_candidates, n), dtype=int)
    sigmas = np.empty((max_candidates, n), dtype=int)
    pis[0] = sigmas[0] = np.arange(n)
    for i in range(1, max_candidates):
        pis[i] = rng.permutation(n)
        sigmas[i] = rng.permutation(n)
    values = np.empty(max_candidates)
    for start in range(0, max_candidates, batch_size):
        sl = slice(start, start + batch_size)
        values[sl] = objective(_permuted_stack(U, pis[sl], sigmas[sl]))
        if early:
            hits = np.flatnonzero(values[sl] <= threshold)
            if hits.size:
                i = start + int(hits[0])
                return _result(U, pis[i], sigmas[i], values[i], values[0], i + 1, threshold)
    i = _lex_argmin(values, pis, sigmas)
    return _result(U, pis[i], sigmas[i], values[i], values[0], max_candidates, threshold)


def _subset_perms(n: int, swaps: Sequence[int]) -> np.ndarray:
    """All products of a set of disjoint nearest-neighbour swaps, bitmask order."""
    out = np.tile(np.arange(n), (1 << len(swaps), 1))
    for mask in range(1 << len(swaps)):
        for bit, j in enumerate(swaps):
            if mask >> bit & 1:
                out[mask, [j, j + 1]] = out[mask, [j + 1, j]]
    return out


def _compose_candidates(pi, sigma, t_in: np.ndarray, t_out: np.ndarray):
    # pi' = pi o t_in, sigma' = t_out o sigma
    pi = np.asarray(pi)
    sigma = np.asarray(sigma)
    pis = pi[t_in]
    sigmas = t_out[:, sigma]
    a, b = len(pis), len(sigmas)
    return np.repeat(pis, b, axis=0), np.tile(sigmas, (a, 1))


def sweep_search(U, objective: Objective, k: int = 2, threshold: float | None = None,
                 per_side: bool = False, batch_size: int = 4096) -> Allocation:
    """Alternate exhaustive searches over non-trivial and trivial swap sets.

    Each repetition first tries every composition of non-trivial input and
    output swaps applied to the current allocation, keeps the best, then does
    the same with the trivial swaps.  Stops after ``k`` repetitions, when a
    repetition brings no improvement, or once ``threshold`` is met.

    Args:
        per_side: Enumerate input and output subsets one after the other
            (``2^a + 2^b`` candidates per phase) instead of jointly
            (``2^(a+b)``).
    """
    if k < 1:
        raise ValueError("sweep count k must be at least 1")
    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    classes = classify_transpositions(n)
    ident = np.arange(n)
    pi, sigma = ident, ident
    current = float(objective(U[None])[0])
    baseline = current
    evaluations = 1

    def done():
        return threshold is not None and np.isfinite(threshold) and current <= threshold

    phases = [(classes.nontrivial_in, classes.nontrivial_out), (classes.trivial_in, classes.trivial_out)]
    for _ in range(k):
        if done():
            break
        improved = False
        for swaps_in, swaps_out in phases:
            if per_side:
                steps = [(_subset_perms(n, swaps_in), ident[None]), (ident[None], _subset_perms(n, swaps_out))]
            else:
                steps = [(_subset_perms(n, swaps_in), _subset_perms(n, swaps_out))]
            for t_in, t_out in steps:
                # candidate 0 (no swaps at all) is the current allocation; skip it
                pis, sigmas = _compose_candidates(pi, sigma, t_in, t_out)
                pis, sigmas = pis[1:], sigmas[1:]
                if not len(pis):
                    continue
                values = _evaluate(U, objective, pis, sigmas, batch_size)
                evaluations += len(values)
                i = _lex_argmin(values, pis, sigmas)
                if values[i] < current:
                    current, pi, sigma = float(values[i]), pis[i], sigmas[i]
                    improved = True
            if done():
                break
        if not improved:
            break
    return _result(U, pi, sigma, current, baseline, evaluations, threshold)


def sweep_candidate_bound(n: int, k: int) -> int:
    """Upper bound on objective evaluations made by :func:`sweep_search`."""
    c = classify_transpositions(n)
    per_rep = 2 ** (len(c.nontrivial_in) + len(c.nontrivial_out)) + 2 ** (len(c.trivial_in) + len(c.trivial_out))
    return k * per_rep + 1


# --- experiment relabeling ---------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Per-port experiment metadata: input squeezing and detected photon counts."""

    squeezing: tuple[float, ...]
    outcomes: tuple[int, ...]

    def __post_init__(self):
        if len(self.squeezing) != len(self.outcomes):
            raise ValueError("squeezing and outcomes must have one entry per mode")


def relabel_experiment(cfg: ExperimentConfig, p_in: Sequence[int], q_out: Sequence[int]) -> ExperimentConfig:
    """Translate user-side metadata for the permuted interferometer.

    Squeezing goes user -> hardware: port ``k`` of the permuted chip receives
    ``squeezing[pi(k)]``.  Outcomes go hardware -> user: the count at
    detector ``sigma(k)`` is reported as user output ``k``.
    """
    n = len(cfg.squeezing)
    p_in = check_permutation(p_in, n)
    q_out = check_permutation(q_out, n)
    return ExperimentConfig(
        tuple(cfg.squeezing[p_in[k]] for k in range(n)),
        tuple(cfg.outcomes[q_out[k]] for k in range(n)),
    )


def default_allocation(n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    ident = identity_permutation(n)
    return ident, ident


__all__ = [
    "Allocation", "ExperimentConfig", "MinDistance", "MinPower", "Objective", "TargetPower",
    "TranspositionClasses", "apply_allocation", "classify_transpositions", "compose",
    "default_allocation", "randomized_search", "relabel_experiment", "sweep_candidate_bound",
    "sweep_search", "unrestricted_search",
]
