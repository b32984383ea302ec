"""Comparison methods: per-location search, greedy scan and fixed regions."""

from __future__ import annotations

from typing import Sequence

from .errors import InvalidArgumentError
from .planner import Partition, PlannerConfig
from .skeleton import PathSkeleton, skeleton_distance

DEFAULT_FIXED_BOUNDARIES = (4, 6, 10)


def _check_m(M):
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise InvalidArgumentError(f"M must be a positive integer, got {M!r}")
    return int(M)


def exhaustive_plan(M: int) -> Partition:
    """Every location is its own region and reference."""
    M = _check_m(M)
    locs = tuple(range(1, M + 1))
    return Partition(M=M, boundaries=locs, references=locs, measurements=tuple((x, None) for x in locs))


def greedy_plan(
    realization: Sequence[PathSkeleton], config: PlannerConfig, n_bs: int, n_ue: int
) -> Partition:
    """Single forward scan with the reference at location 1.

    A new region starts at the first location whose skeleton is dissimilar
    (``d <= gamma``) to the current reference; that location becomes the new
    reference.
    """
    M = _check_m(len(realization))
    refs, bounds = [1], []
    for x in range(2, M + 1):
        if skeleton_distance(realization[x - 1], realization[refs[-1] - 1], n_bs, n_ue) <= config.gamma:
            bounds.append(x - 1)
            refs.append(x)
    bounds.append(M)
    return Partition(
        M=M, boundaries=tuple(bounds), references=tuple(refs), measurements=tuple((x, None) for x in refs)
    )


def fixed_plan(M: int, boundaries: Sequence[int] = DEFAULT_FIXED_BOUNDARIES) -> Partition:
    """Regions ending at ``boundaries``; each reference is its region's first location."""
    M = _check_m(M)
    b = tuple(int(v) for v in boundaries)
    if not b or b[-1] != M or any(x >= y for x, y in zip((0,) + b, b)):
        raise InvalidArgumentError(f"boundaries {tuple(boundaries)} must increase strictly from 1 and end at M={M}")
    refs = tuple(a + 1 for a in (0,) + b[:-1])
    return Partition(M=M, boundaries=b, references=refs, measurements=tuple((x, None) for x in refs))
