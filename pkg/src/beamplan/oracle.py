"""Brute-force references for the planner.

Nothing here uses the block decomposition. :func:`oracle_expectimax` searches
over every adaptive measurement policy on the full joint law of the chain;
:func:`min_references_deterministic` scans every partition of a fixed
skeleton sequence. Both are exponential and guarded by caps.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .planner import Partition, PlannerConfig
from .skeleton import PathSkeleton, skeleton_distance
from .stochastic import SkeletonProcess


def compositions(M: int):
    """All splits of ``1..M`` into contiguous non-empty regions, as ``(lo, hi)`` lists."""
    for cuts in itertools.product((False, True), repeat=M - 1):
        regions, lo = [], 1
        for x, cut in enumerate(cuts, start=1):
            if cut:
                regions.append((lo, x))
                lo = x + 1
        regions.append((lo, M))
        yield regions


def _joint_law(process: SkeletonProcess) -> np.ndarray:
    """``P(S_1 = s_1, ..., S_M = s_M)`` as an array with one axis per location."""
    joint = process.initial.copy()
    for _ in range(process.M - 1):
        joint = joint[..., None] * process.kernel
    return joint


class _Expectimax:
    """Adaptive-policy search on the full joint law; see :func:`oracle_expectimax`."""

    def __init__(self, process, config, max_locations, max_states):
        M, A = process.M, process.n_states
        if M > max_locations or A > max_states:
            raise CapacityError(f"oracle limited to M <= {max_locations}, {max_states} states; got {M}, {A}")
        self.process, self.M, self.A = process, M, A
        self.eps = Fraction(str(config.epsilon)) if process.exact else config.epsilon
        self.tol = 0 if process.exact else config.tol
        self.joint = _joint_law(process)
        self.bad = {}
        for y in range(1, M + 1):
            for r in range(1, M + 1):
                self.bad[y, r] = np.array(
                    [
                        [
                            skeleton_distance(
                                process.skeletons[y - 1][t], process.skeletons[r - 1][s], process.n_bs, process.n_ue
                            )
                            <= config.gamma
                            for s in range(A)
                        ]
                        for t in range(A)
                    ]
                )
        self.value = lru_cache(maxsize=None)(self._value)

    def restricted(self, info):
        w = self.joint
        for loc, s in info:
            mask = np.zeros(self.A, dtype=bool)
            mask[s] = True
            shape = [1] * self.M
            shape[loc - 1] = self.A
            w = w * mask.reshape(shape)
        return w

    def marginal(self, w, y):
        axes = tuple(i for i in range(self.M) if i != y - 1)
        return w.sum(axis=axes) if axes else w

    def feasible(self, info, w, total):
        known = dict(info)
        covered = {}

        def serves(r, lo, hi):
            for y in range(lo, hi + 1):
                if y == r:
                    continue
                if (y, r) not in covered:
                    pz = self.marginal(w, y)
                    num = sum(pz[t] for t in range(self.A) if self.bad[y, r][t, known[r]])
                    covered[y, r] = num <= self.eps * total + self.tol * total
                if not covered[y, r]:
                    return False
            return True

        for regions in compositions(self.M):
            options = []
            for lo, hi in regions:
                refs = [r for r in (lo - 1, hi) if r in known and serves(r, lo, hi)]
                if not refs:
                    break
                options.append(refs)
            else:
                for choice in itertools.product(*options):
                    if set(choice) == set(known):
                        return True
        return False

    def moves(self, info):
        """``(value, candidate)`` for every unmeasured location, or ``None`` when terminal."""
        w = self.restricted(info)
        total = w.sum()
        if total == 0:
            raise InvalidArgumentError("evidence has zero probability")
        if info and self.feasible(info, w, total):
            return None
        measured = {loc for loc, _ in info}
        out = []
        for z in range(1, self.M + 1):
            if z in measured:
                continue
            pz = self.marginal(w, z)
            acc = 0
            for u in range(self.A):
                if pz[u] != 0:
                    acc = acc + pz[u] / total * self.value(info | {(z, u)})
            out.append((1 + acc, z))
        return out

    def _value(self, info: frozenset):
        moves = self.moves(info)
        return 0 if moves is None else min(v for v, _ in moves)


def _evidence(evidence):
    return frozenset((int(x), int(s)) for x, s in (evidence or {}).items())


def oracle_expectimax(
    process: SkeletonProcess,
    config: PlannerConfig,
    M: Optional[int] = None,
    evidence: Optional[Mapping[int, int]] = None,
    max_locations: int = 6,
    max_states: int = 4,
):
    """Least expected number of further measurements over all adaptive policies.

    The information state is the set of ``(location, state)`` pairs measured
    so far, starting from ``evidence``. It is terminal when some partition of
    ``1..M`` has every region served by a measured endpoint with all coverage
    probabilities, computed from the full posterior, at most ``epsilon``.
    Each measured location must serve at least one region and always serves
    itself.
    """
    if M is not None and M != process.M:
        raise InvalidArgumentError(f"M={M} does not match the process ({process.M} locations)")
    return _Expectimax(process, config, max_locations, max_states).value(_evidence(evidence))


def oracle_best_moves(
    process: SkeletonProcess,
    config: PlannerConfig,
    evidence: Optional[Mapping[int, int]] = None,
    max_locations: int = 6,
    max_states: int = 4,
) -> list[int]:
    """Every optimal next measurement from ``evidence`` (empty when no measurement is needed)."""
    ex = _Expectimax(process, config, max_locations, max_states)
    moves = ex.moves(_evidence(evidence))
    if moves is None:
        return []
    best = min(v for v, _ in moves)
    return [z for v, z in moves if v == best]


def min_references_deterministic(
    skeletons: Sequence[PathSkeleton], n_bs: int, n_ue: int, gamma: float
) -> tuple[int, list[Partition]]:
    """Fewest distinct references over all partitions of a fixed skeleton sequence.

    Region ``{lo..hi}`` may use reference ``lo - 1`` (if ``lo > 1``) or ``hi``,
    and is served when ``d > gamma`` for every location other than the
    reference itself.

    Returns:
        The minimum count and every partition attaining it.
    """
    M = len(skeletons)
    if M < 1:
        raise InvalidArgumentError("need at least one location")
    if M > 16:
        raise CapacityError(f"partition scan limited to M <= 16, got {M}")
    d = np.array([[skeleton_distance(a, b, n_bs, n_ue) for b in skeletons] for a in skeletons])

    @lru_cache(maxsize=None)
    def serves(r, lo, hi):
        return all(y == r or d[y - 1, r - 1] > gamma for y in range(lo, hi + 1))

    best, found = None, []
    for regions in compositions(M):
        options = []
        for lo, hi in regions:
            refs = tuple(r for r in (lo - 1, hi) if r >= 1 and serves(r, lo, hi))
            if not refs:
                break
            options.append(refs)
        else:
            for choice in itertools.product(*options):
                k = len(set(choice))
                if best is None or k < best:
                    best, found = k, [(regions, choice)]
                elif k == best:
                    found.append((regions, choice))
    winners = []
    for regions, choice in found:
        part = Partition.from_regions(M, [(lo, hi, r) for (lo, hi), r in zip(regions, choice)])
        if part not in winners:
            winners.append(part)
    return best, winners
