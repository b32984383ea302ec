"""Minimum expected number of reference points over a trajectory.

Blocks ``B(x_l, x_h)`` are the location sets ``{x_l+1, ..., x_h}``. Their
state carries the measured skeleton state at the left end (Type 2), the
right end (Type 3) or both (Type 1). The value of a block is the least
expected number of new measurements needed inside it so that every
location is served by a measured neighbour: a location ``y`` is served by
reference ``r`` when ``Pr{d(PS(y), ps(r)) <= gamma | evidence} <= epsilon``.

The recursion is solved per block for all endpoint states at once, so each
memo entry is a table indexed by endpoint state(s). Tables hold floats or
``Fraction`` objects depending on the process.

A measured location always serves itself, whatever its skeleton; without
this an all-blocked skeleton (``d = 0``) could never be covered and the
problem would have no feasible solution.
"""

from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import CapacityError, InvalidArgumentError, ModelMismatchError
from .stochastic import SkeletonProcess


class BlockType(enum.IntEnum):
    TYPE1 = 1  # both endpoint skeletons known
    TYPE2 = 2  # left endpoint known
    TYPE3 = 3  # right endpoint known


@dataclass(frozen=True)
class PlannerConfig:
    """Coverage thresholds and caps.

    ``gamma`` is compared with the raw similarity ``d`` in ``[0, L]``.
    ``tol`` only applies to float processes; exact processes compare exactly.
    """

    gamma: float = 0.2
    epsilon: float = 0.1
    L: int = 3
    max_states: int = 64
    tol: float = 1e-12

    def __post_init__(self):
        if not 0 <= self.gamma <= self.L:
            raise InvalidArgumentError(f"gamma={self.gamma} outside [0, L={self.L}]")
        if not 0 <= self.epsilon <= 1:
            raise InvalidArgumentError(f"epsilon={self.epsilon} outside [0, 1]")


@dataclass(frozen=True)
class BlockState:
    x_l: int
    x_h: int
    block_type: BlockType
    s_l: Optional[int] = None
    s_h: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.x_l <= self.x_h:
            raise InvalidArgumentError(f"need 0 <= x_l <= x_h, got {self.x_l}, {self.x_h}")
        needs_l = self.block_type in (BlockType.TYPE1, BlockType.TYPE2)
        needs_h = self.block_type in (BlockType.TYPE1, BlockType.TYPE3)
        if needs_l != (self.s_l is not None) or needs_h != (self.s_h is not None):
            raise InvalidArgumentError(f"{self.block_type.name} block has wrong endpoint skeletons")
        if needs_l and self.x_l < 1:
            raise InvalidArgumentError("a known left endpoint must be a trajectory location")


@dataclass(frozen=True)
class NoRef:
    """No new reference; locations up to ``alpha`` use the left endpoint, the rest the right."""

    alpha: int


@dataclass(frozen=True)
class NewRef:
    """Measure location ``x`` next."""

    x: int


Decision = Union[NoRef, NewRef]


@dataclass(eq=False)
class _Table:
    values: np.ndarray
    alpha: np.ndarray  # split index for NoRef entries, -1 otherwise
    new_ref: np.ndarray  # next reference for NewRef entries, -1 otherwise


class BlockSolver:
    """Memoized block values for one process and configuration.

    Safe to share between threads: table construction runs under a lock, so
    every block is evaluated at most once.
    """

    def __init__(self, process: SkeletonProcess, config: PlannerConfig):
        if process.n_states > config.max_states:
            raise CapacityError(f"alphabet of {process.n_states} states exceeds cap {config.max_states}")
        self.process = process
        self.config = config
        self.exact = process.exact
        if self.exact:
            self.eps = Fraction(str(config.epsilon))
            self.tol = 0
        else:
            self.eps = float(config.epsilon)
            self.tol = config.tol
        self._tables: dict[tuple[int, int, int], _Table] = {}
        self._lock = threading.RLock()

    # -- helpers ---------------------------------------------------------

    def _K(self, steps):
        return self.process.kernel_power(steps)

    def _bad(self, y, ref):
        return self.process.dissimilar(y, ref, self.config.gamma)

    def _zeros(self, shape):
        if self.exact:
            return np.full(shape, Fraction(0), dtype=object)
        return np.zeros(shape)

    def _ok(self, num, den):
        """``num/den <= eps`` without dividing; ``den`` may be 0 for unreachable entries."""
        return num <= self.eps * den + self.tol * den

    def _argmin(self, candidates: Iterable[tuple[int, np.ndarray]], den, shape):
        """Elementwise minimum of numerators, earliest candidate winning ties."""
        best = None
        arg = np.full(shape, -1, dtype=np.int64)
        for z, num in candidates:
            if best is None:
                best = num.copy() if hasattr(num, "copy") else num
                arg[...] = z
                continue
            better = num < best - self.tol * den
            best = np.where(better, num, best)
            arg = np.where(better, z, arg)
        return best, arg

    @staticmethod
    def _safe(den):
        return np.where(den == 0, 1, den)

    # -- tables ----------------------------------------------------------

    def table(self, btype: BlockType, x_l: int, x_h: int) -> _Table:
        key = (int(btype), x_l, x_h)
        tab = self._tables.get(key)
        if tab is not None:
            return tab
        with self._lock:
            tab = self._tables.get(key)
            if tab is None:
                build = {1: self._type1, 2: self._type2, 3: self._type3}[int(btype)]
                tab = build(x_l, x_h)
                self._tables[key] = tab
        return tab

    def _type1(self, x_l, x_h) -> _Table:
        A = self.process.n_states
        shape = (A, A)
        if x_l == x_h:
            return _Table(self._zeros(shape), np.full(shape, x_l), np.full(shape, -1))
        den = self._K(x_h - x_l)
        ok_l, ok_r = {}, {}
        for y in range(x_l + 1, x_h + 1):
            K1, K2 = self._K(y - x_l), self._K(x_h - y)
            ok_l[y] = self._ok((K1 * self._bad(y, x_l).T) @ K2, den)
            if y == x_h:
                ok_r[y] = np.ones(shape, dtype=bool)
            else:
                ok_r[y] = self._ok(K1 @ (K2 * self._bad(y, x_h)), den)

        prefix = {x_l: np.ones(shape, dtype=bool)}
        for a in range(x_l + 1, x_h + 1):
            prefix[a] = prefix[a - 1] & ok_l[a]
        suffix = {x_h: np.ones(shape, dtype=bool)}
        for a in range(x_h - 1, x_l - 1, -1):
            suffix[a] = suffix[a + 1] & ok_r[a + 1]

        # smallest feasible split inside the block; an empty left part only as fallback
        alpha = np.full(shape, -1, dtype=np.int64)
        for a in list(range(x_l + 1, x_h + 1)) + [x_l]:
            alpha = np.where((alpha < 0) & prefix[a] & suffix[a], a, alpha)
        feasible = alpha >= 0
        reach = den != 0

        values = self._zeros(shape)
        new_ref = np.full(shape, -1, dtype=np.int64)
        todo = reach & ~feasible
        if np.any(todo):

            def candidates():
                for z in range(x_l + 1, x_h):
                    K1, K2 = self._K(z - x_l), self._K(x_h - z)
                    left = self.table(BlockType.TYPE1, x_l, z).values
                    right = self.table(BlockType.TYPE1, z, x_h).values
                    yield z, (K1 * left) @ K2 + K1 @ (K2 * right)

            best, arg = self._argmin(candidates(), den, shape)
            values = np.where(todo, 1 + best / self._safe(den), values)
            new_ref = np.where(todo, arg, -1)
        alpha = np.where(todo, -1, np.where(feasible, alpha, x_l))
        return _Table(values, alpha, new_ref)

    def _type2(self, x_l, x_h) -> _Table:
        A = self.process.n_states
        if x_l == x_h:
            return _Table(self._zeros(A), np.full(A, x_h), np.full(A, -1))
        one = 1
        feasible = np.ones(A, dtype=bool)
        for y in range(x_l + 1, x_h + 1):
            K1 = self._K(y - x_l)
            feasible &= self._ok((K1 * self._bad(y, x_l).T).sum(axis=1), one)

        values = self._zeros(A)
        new_ref = np.full(A, -1, dtype=np.int64)
        todo = ~feasible
        if np.any(todo):

            def candidates():
                for z in range(x_l + 1, x_h + 1):
                    K1 = self._K(z - x_l)
                    left = self.table(BlockType.TYPE1, x_l, z).values
                    right = self.table(BlockType.TYPE2, z, x_h).values
                    yield z, (K1 * left).sum(axis=1) + K1 @ right

            best, arg = self._argmin(candidates(), one, A)
            values = np.where(todo, 1 + best, values)
            new_ref = np.where(todo, arg, -1)
        alpha = np.where(todo, -1, x_h)
        return _Table(values, alpha, new_ref)

    def _type3(self, x_l, x_h) -> _Table:
        A = self.process.n_states
        if x_l == x_h:
            return _Table(self._zeros(A), np.full(A, x_l), np.full(A, -1))
        den = self.process.marginal(x_h)
        feasible = np.ones(A, dtype=bool)
        for y in range(x_l + 1, x_h):
            num = self.process.marginal(y) @ (self._K(x_h - y) * self._bad(y, x_h))
            feasible &= self._ok(num, den)
        reach = den != 0

        values = self._zeros(A)
        new_ref = np.full(A, -1, dtype=np.int64)
        todo = reach & ~feasible
        if np.any(todo):

            def candidates():
                for z in range(x_l + 1, x_h):
                    pz, K2 = self.process.marginal(z), self._K(x_h - z)
                    left = self.table(BlockType.TYPE3, x_l, z).values
                    right = self.table(BlockType.TYPE1, z, x_h).values
                    yield z, (pz * left) @ K2 + pz @ (K2 * right)

            best, arg = self._argmin(candidates(), den, A)
            values = np.where(todo, 1 + best / self._safe(den), values)
            new_ref = np.where(todo, arg, -1)
        alpha = np.where(todo, -1, x_l)
        return _Table(values, alpha, new_ref)

    # -- per-state access ------------------------------------------------

    def value(self, state: BlockState):
        """``(value, decision)`` of a block state."""
        if state.x_h > self.process.M:
            raise InvalidArgumentError(f"block end {state.x_h} beyond M={self.process.M}")
        tab = self.table(state.block_type, state.x_l, state.x_h)
        if state.block_type == BlockType.TYPE1:
            idx = (state.s_l, state.s_h)
        elif state.block_type == BlockType.TYPE2:
            idx = state.s_l
        else:
            idx = state.s_h
        a, z = int(tab.alpha[idx]), int(tab.new_ref[idx])
        return tab.values[idx], (NewRef(z) if z >= 0 else NoRef(a))

    def root(self):
        """``(expected count, first reference)`` for the whole trajectory."""
        M = self.process.M

        def candidates():
            for z in range(1, M + 1):
                pz = self.process.marginal(z)
                left = self.table(BlockType.TYPE3, 0, z).values
                right = self.table(BlockType.TYPE2, z, M).values
                yield z, np.asarray((pz * (left + right)).sum())

        best, arg = self._argmin(candidates(), 1, ())
        return 1 + best[()], int(arg[()])

    def children(self, state: BlockState, z: int):
        """``(probability, (left child, right child))`` for each outcome of measuring ``z``."""
        p = self.process
        K = self._K
        out = []
        for u in range(p.n_states):
            if state.block_type == BlockType.TYPE1:
                den = K(state.x_h - state.x_l)[state.s_l, state.s_h]
                w = K(z - state.x_l)[state.s_l, u] * K(state.x_h - z)[u, state.s_h] / den
                kids = (
                    BlockState(state.x_l, z, BlockType.TYPE1, state.s_l, u),
                    BlockState(z, state.x_h, BlockType.TYPE1, u, state.s_h),
                )
            elif state.block_type == BlockType.TYPE2:
                w = K(z - state.x_l)[state.s_l, u]
                kids = (
                    BlockState(state.x_l, z, BlockType.TYPE1, state.s_l, u),
                    BlockState(z, state.x_h, BlockType.TYPE2, u, None),
                )
            else:
                w = p.marginal(z)[u] * K(state.x_h - z)[u, state.s_h] / p.marginal(state.x_h)[state.s_h]
                kids = (
                    BlockState(state.x_l, z, BlockType.TYPE3, None, u),
                    BlockState(z, state.x_h, BlockType.TYPE1, u, state.s_h),
                )
            if w != 0:
                out.append((w, kids))
        return out


def _solver_for(process, config, solver):
    if solver is None:
        return BlockSolver(process, config)
    if solver.process is not process or solver.config != config:
        raise InvalidArgumentError("solver was built for a different process or configuration")
    return solver


def value_type1(state: BlockState, process: SkeletonProcess, config: PlannerConfig, solver=None):
    if state.block_type != BlockType.TYPE1:
        raise InvalidArgumentError("expected a Type 1 block state")
    return _solver_for(process, config, solver).value(state)


def value_type2(state: BlockState, process: SkeletonProcess, config: PlannerConfig, solver=None):
    if state.block_type != BlockType.TYPE2:
        raise InvalidArgumentError("expected a Type 2 block state")
    return _solver_for(process, config, solver).value(state)


def value_type3(state: BlockState, process: SkeletonProcess, config: PlannerConfig, solver=None):
    if state.block_type != BlockType.TYPE3:
        raise InvalidArgumentError("expected a Type 3 block state")
    return _solver_for(process, config, solver).value(state)


# ---------------------------------------------------------------------------
# Plans and partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Plan:
    """Adaptive measurement policy.

    ``decisions`` holds the decision for every block state reachable with
    positive probability under the policy.
    """

    process: SkeletonProcess
    config: PlannerConfig
    expected_k: object
    root: int
    decisions: dict = field(repr=False)

    @property
    def M(self) -> int:
        return self.process.M

    def to_dict(self) -> dict:
        rows = []
        for st, dec in sorted(
            self.decisions.items(),
            key=lambda kv: (
                kv[0].x_l,
                kv[0].x_h,
                int(kv[0].block_type),
                -1 if kv[0].s_l is None else kv[0].s_l,
                -1 if kv[0].s_h is None else kv[0].s_h,
            ),
        ):
            rows.append(
                {
                    "type": int(st.block_type),
                    "x_l": st.x_l,
                    "x_h": st.x_h,
                    "s_l": st.s_l,
                    "s_h": st.s_h,
                    "decision": "new_ref" if isinstance(dec, NewRef) else "no_ref",
                    "index": dec.x if isinstance(dec, NewRef) else dec.alpha,
                }
            )
        out = {"M": self.M, "expected_k": float(self.expected_k), "root": self.root, "decisions": rows}
        if isinstance(self.expected_k, Fraction):
            out["expected_k_exact"] = str(self.expected_k)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def solve(process: SkeletonProcess, config: PlannerConfig, M: Optional[int] = None, solver=None) -> Plan:
    """Optimal adaptive policy for the whole trajectory ``1..M``."""
    if M is not None and M != process.M:
        raise InvalidArgumentError(f"M={M} does not match the process ({process.M} locations)")
    solver = _solver_for(process, config, solver)
    expected, root = solver.root()

    decisions: dict[BlockState, Decision] = {}
    stack = []
    for u in range(process.n_states):
        if process.marginal(root)[u] != 0:
            stack.append(BlockState(0, root, BlockType.TYPE3, None, u))
            stack.append(BlockState(root, process.M, BlockType.TYPE2, u, None))
    while stack:
        st = stack.pop()
        if st in decisions:
            continue
        _, dec = solver.value(st)
        decisions[st] = dec
        if isinstance(dec, NewRef):
            for _, kids in solver.children(st, dec.x):
                stack.extend(k for k in kids if k not in decisions)
    return Plan(process=process, config=config, expected_k=expected, root=root, decisions=decisions)


@dataclass(frozen=True)
class Partition:
    """Realized regions ``{alpha_{k-1}+1, ..., alpha_k}`` with one reference each.

    ``boundaries`` lists ``alpha_1 .. alpha_K`` (so the last entry is ``M``).
    ``measurements`` lists ``(location, state)`` in the order measured; the
    state is ``None`` when unknown (baselines). The measurement count is the
    number of reference points paid for.
    """

    M: int
    boundaries: tuple[int, ...]
    references: tuple[int, ...]
    measurements: tuple[tuple[int, Optional[int]], ...] = ()

    @property
    def regions(self) -> list[tuple[int, int]]:
        starts = (0,) + self.boundaries[:-1]
        return [(a + 1, b) for a, b in zip(starts, self.boundaries)]

    @property
    def K(self) -> int:
        return len({loc for loc, _ in self.measurements}) if self.measurements else len(set(self.references))

    def reference_of(self, x: int) -> int:
        for (lo, hi), ref in zip(self.regions, self.references):
            if lo <= x <= hi:
                return ref
        raise InvalidArgumentError(f"location {x} outside 1..{self.M}")

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "boundaries": list(self.boundaries),
            "references": list(self.references),
            "measurements": [[loc, s] for loc, s in self.measurements],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        return cls(
            M=int(d["M"]),
            boundaries=tuple(d["boundaries"]),
            references=tuple(d["references"]),
            measurements=tuple((int(a), None if b is None else int(b)) for a, b in d.get("measurements", [])),
        )

    @classmethod
    def from_regions(cls, M, regions: Sequence[tuple[int, int, int]], measurements=()) -> "Partition":
        """From ``(start, end, reference)`` triples; adjacent regions sharing a reference merge."""
        merged: list[list[int]] = []
        for lo, hi, ref in sorted(r for r in regions if r[0] <= r[1]):
            if merged and merged[-1][2] == ref and merged[-1][1] + 1 == lo:
                merged[-1][1] = hi
            else:
                merged.append([lo, hi, ref])
        return cls(
            M=M,
            boundaries=tuple(r[1] for r in merged),
            references=tuple(r[2] for r in merged),
            measurements=tuple(measurements),
        )


PARTITION_RULES = ("boundary", "closure", "adjacent")


def validate_partition(partition: Partition, rule: str = "closure") -> None:
    """Raise unless ``partition`` is a disjoint cover of ``1..M`` with admissible references.

    Rules for where region ``k``'s reference may sit:

    * ``boundary``: ``x_k in {alpha_{k-1}, alpha_k}``
    * ``closure``: ``x_k in R_k`` or ``x_k = alpha_{k-1}``
    * ``adjacent``: ``x_k in R_k`` or either neighbouring location
    """
    if rule not in PARTITION_RULES:
        raise InvalidArgumentError(f"unknown rule {rule!r}")
    M, b = partition.M, partition.boundaries
    if not b or b[-1] != M or any(x >= y for x, y in zip((0,) + b, b)):
        raise InvalidArgumentError(f"boundaries {b} must increase strictly from 0 to M={M}")
    if len(partition.references) != len(b):
        raise InvalidArgumentError("one reference per region is required")
    for (lo, hi), ref in zip(partition.regions, partition.references):
        if not 1 <= ref <= M:
            raise InvalidArgumentError(f"reference {ref} is not a trajectory location")
        allowed = {
            "boundary": {lo - 1, hi},
            "closure": set(range(lo - 1, hi + 1)),
            "adjacent": set(range(lo - 1, hi + 2)),
        }[rule]
        if ref not in allowed:
            raise InvalidArgumentError(f"reference {ref} not admissible for region {lo}..{hi} under {rule!r}")


def realize_plan(plan: Plan, realization: Union[Sequence, Callable[[int], object]]) -> Partition:
    """Run the policy against realized skeletons.

    ``realization`` is either a sequence indexed by ``location - 1`` or a
    callback ``location -> observation``; observations are state indices or
    skeleton labels of the process.
    """
    process = plan.process
    get = realization if callable(realization) else (lambda x: realization[x - 1])
    measured: list[tuple[int, int]] = []

    def measure(x):
        s = process.state_of(x, get(x))
        measured.append((x, s))
        return s

    regions = []
    s = measure(plan.root)
    stack = [
        BlockState(0, plan.root, BlockType.TYPE3, None, s),
        BlockState(plan.root, process.M, BlockType.TYPE2, s, None),
    ]
    while stack:
        st = stack.pop()
        dec = plan.decisions.get(st)
        if dec is None:
            raise ModelMismatchError(f"realization reached {st}, which has zero probability under the model")
        if isinstance(dec, NoRef):
            if st.block_type == BlockType.TYPE1:
                regions.append((st.x_l + 1, dec.alpha, st.x_l))
                regions.append((dec.alpha + 1, st.x_h, st.x_h))
            elif st.block_type == BlockType.TYPE2:
                regions.append((st.x_l + 1, st.x_h, st.x_l))
            else:
                regions.append((st.x_l + 1, st.x_h, st.x_h))
            continue
        z = dec.x
        u = measure(z)
        if st.block_type == BlockType.TYPE1:
            kids = [BlockState(st.x_l, z, BlockType.TYPE1, st.s_l, u), BlockState(z, st.x_h, BlockType.TYPE1, u, st.s_h)]
        elif st.block_type == BlockType.TYPE2:
            kids = [BlockState(st.x_l, z, BlockType.TYPE1, st.s_l, u), BlockState(z, st.x_h, BlockType.TYPE2, u, None)]
        else:
            kids = [BlockState(st.x_l, z, BlockType.TYPE3, None, u), BlockState(z, st.x_h, BlockType.TYPE1, u, st.s_h)]
        stack.extend(reversed(kids))
    return Partition.from_regions(process.M, regions, measured)
