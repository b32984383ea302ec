"""Path skeletons, the rank-paired similarity ``d`` and codebook quantization.

A skeleton entry is either an ``(aod, aoa)`` pair or ``None`` when fewer than
``L`` paths survive (deep blockage).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .arraysim import Codebook, PathComponent, array_responses
from .errors import InvalidArgumentError

AnglePair = tuple[float, float]
IndexPair = tuple[int, int]


@dataclass(frozen=True)
class PathSkeleton:
    pairs: tuple[Optional[AnglePair], ...]

    @property
    def L(self) -> int:
        return len(self.pairs)

    @property
    def null_free(self) -> bool:
        return all(p is not None for p in self.pairs)

    def to_list(self):
        return [None if p is None else [float(p[0]), float(p[1])] for p in self.pairs]


@dataclass(frozen=True)
class QuantizedSkeleton:
    pairs: tuple[Optional[IndexPair], ...]

    @property
    def L(self) -> int:
        return len(self.pairs)

    def to_list(self):
        return [None if p is None else [int(p[0]), int(p[1])] for p in self.pairs]


def extract_skeleton(paths: Sequence[PathComponent], L: int) -> PathSkeleton:
    """Top-``L`` paths by ``|gain|`` (ties by ascending AoD), padded with ``None``."""
    if isinstance(L, bool) or int(L) != L or L < 1:
        raise InvalidArgumentError(f"L must be a positive integer, got {L!r}")
    ranked = sorted(paths, key=lambda p: (-abs(p.gain), p.aod_rad))
    pairs: list[Optional[AnglePair]] = [(p.aod_rad, p.aoa_rad) for p in ranked[:L]]
    pairs += [None] * (L - len(pairs))
    return PathSkeleton(tuple(pairs))


def _responses(ps: PathSkeleton, n_bs: int, n_ue: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-rank BS and UE responses as columns; ``None`` entries become zero columns."""
    aod = np.array([0.0 if p is None else p[0] for p in ps.pairs])
    aoa = np.array([0.0 if p is None else p[1] for p in ps.pairs])
    mask = np.array([p is not None for p in ps.pairs], dtype=float)
    return array_responses(aod, n_bs) * mask, array_responses(aoa, n_ue) * mask


def skeleton_distance(a: PathSkeleton, b: PathSkeleton, n_bs: int, n_ue: int) -> float:
    """Similarity ``sum_l |a_ue(aoa_b)^H a_ue(aoa_a)| * |a_bs(aod_b)^H a_bs(aod_a)|``.

    Entries are paired by rank. A ``None`` on either side contributes 0, so the
    value lies in ``[0, L]`` and larger means more alike.
    """
    if a.L != b.L:
        raise InvalidArgumentError(f"skeleton lengths differ: {a.L} vs {b.L}")
    bs_a, ue_a = _responses(a, n_bs, n_ue)
    bs_b, ue_b = _responses(b, n_bs, n_ue)
    bs = np.abs(np.sum(bs_b.conj() * bs_a, axis=0))
    ue = np.abs(np.sum(ue_b.conj() * ue_a, axis=0))
    return float(np.sum(bs * ue))


def skeleton_distance_matrix(
    rows: Sequence[PathSkeleton], cols: Sequence[PathSkeleton], n_bs: int, n_ue: int
) -> np.ndarray:
    """``skeleton_distance(rows[i], cols[j])`` for all pairs, vectorized."""
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    L = rows[0].L
    if any(s.L != L for s in list(rows) + list(cols)):
        raise InvalidArgumentError("all skeletons must share the same L")
    r = [_responses(s, n_bs, n_ue) for s in rows]
    c = [_responses(s, n_bs, n_ue) for s in cols]
    r_bs = np.stack([x[0] for x in r])  # (R, n_bs, L)
    r_ue = np.stack([x[1] for x in r])
    c_bs = np.stack([x[0] for x in c])
    c_ue = np.stack([x[1] for x in c])
    bs = np.abs(np.einsum("jnl,inl->ijl", c_bs.conj(), r_bs))
    ue = np.abs(np.einsum("jnl,inl->ijl", c_ue.conj(), r_ue))
    return np.sum(bs * ue, axis=2)


def nearest_beam(angle_rad: float, book: Codebook) -> int:
    """Index of the grid beam nearest in ``sin``; an exact midpoint goes to the lower index."""
    sines = book.sines
    s = np.sin(angle_rad)
    k = int(np.searchsorted(sines, s))
    if k == 0:
        return 0
    if k >= book.size:
        return book.size - 1
    lower, upper = s - sines[k - 1], sines[k] - s
    # float noise around a midpoint must not flip the tie rule
    return k if upper < lower - 1e-12 else k - 1


def quantize_skeleton(ps: PathSkeleton, bs_book: Codebook, ue_book: Codebook) -> QuantizedSkeleton:
    if bs_book.size == 0 or ue_book.size == 0:
        raise InvalidArgumentError("codebooks must be non-empty")
    pairs = tuple(
        None if p is None else (nearest_beam(p[0], bs_book), nearest_beam(p[1], ue_book))
        for p in ps.pairs
    )
    return QuantizedSkeleton(pairs)


def dequantize_skeleton(qs: QuantizedSkeleton, bs_book: Codebook, ue_book: Codebook) -> PathSkeleton:
    pairs = tuple(
        None if p is None else (float(bs_book.angles[p[0]]), float(ue_book.angles[p[1]]))
        for p in qs.pairs
    )
    return PathSkeleton(pairs)
