"""Stochastic model of path skeletons along a quantized trajectory.

The hidden state at each location is the blockage pattern of a fixed set of
candidate paths (LoS plus single-bounce scatterers). Every path flips between
unblocked and blocked by its own two-state Markov chain, so the joint pattern
is a homogeneous Markov chain whose kernel is the Kronecker product of the
per-path kernels. State ``s`` has path ``p`` blocked iff bit ``p`` of ``s`` is
set. The skeleton observed at location ``x`` in state ``s`` is the quantized
top-``L`` skeleton of the unblocked paths there.

Probabilities are numpy arrays of either ``float64`` or ``object`` dtype holding
:class:`fractions.Fraction`; the latter gives exact arithmetic end to end.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .arraysim import Codebook, PathComponent
from .errors import CapacityError, ConditioningError, InvalidArgumentError, ModelMismatchError, SchemaError
from .skeleton import (
    PathSkeleton,
    QuantizedSkeleton,
    dequantize_skeleton,
    extract_skeleton,
    quantize_skeleton,
    skeleton_distance_matrix,
)

SPEED_OF_LIGHT = 299_792_458.0
CSV_COLUMNS = ("location_index", "path_rank", "aod_deg", "aoa_deg", "gain_db")


# ---------------------------------------------------------------------------
# Scenario geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidatePath:
    aod_rad: float
    aoa_rad: float
    gain_db: float


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic street geometry.

    The trajectory runs along the x axis, centred on the origin, sampled at
    the centres of ``n_locations`` equal bins. The BS sits ``bs_offset_m`` off
    the trajectory midpoint. Both ULAs are aligned with the x axis.
    """

    n_locations: int = 10
    trajectory_length_m: float = 10.0
    bs_offset_m: float = 10.0
    n_scatterers: int = 2
    scatterer_along_m: float = 40.0
    scatterer_across_m: tuple[float, float] = (5.0, 30.0)
    scatter_loss_db: tuple[float, float] = (6.0, 12.0)
    carrier_ghz: float = 28.0

    def validate(self):
        if self.n_locations < 1:
            raise InvalidArgumentError("n_locations must be >= 1")
        if self.trajectory_length_m <= 0:
            raise InvalidArgumentError("trajectory_length_m must be positive")
        if self.bs_offset_m <= 0:
            raise InvalidArgumentError("bs_offset_m must be positive")
        if self.n_scatterers < 0:
            raise InvalidArgumentError("n_scatterers must be >= 0")
        lo, hi = self.scatterer_across_m
        if not 0 < lo <= hi:
            raise InvalidArgumentError("scatterer_across_m must satisfy 0 < lo <= hi")
        if self.carrier_ghz <= 0:
            raise InvalidArgumentError("carrier_ghz must be positive")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Candidate paths per location; ``candidate_paths[x-1][p]`` is path ``p`` at location ``x``.

    A ``None`` entry marks a path that does not exist at that location.
    Positions are absent for imported ray-trace data.
    """

    candidate_paths: tuple[tuple[Optional[CandidatePath], ...], ...]
    bs_position: Optional[tuple[float, float]] = None
    trajectory_points: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if len(self.candidate_paths) < 1:
            raise InvalidArgumentError("a scenario needs at least one location")
        widths = {len(row) for row in self.candidate_paths}
        if len(widths) != 1:
            raise InvalidArgumentError("every location must list the same number of path slots")

    @property
    def M(self) -> int:
        return len(self.candidate_paths)

    @property
    def n_paths(self) -> int:
        return len(self.candidate_paths[0])

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "bs_position": None if self.bs_position is None else list(self.bs_position),
            "trajectory_points": None
            if self.trajectory_points is None
            else [list(p) for p in self.trajectory_points],
            "candidate_paths": [
                [
                    None
                    if p is None
                    else {
                        "aod_deg": math.degrees(p.aod_rad),
                        "aoa_deg": math.degrees(p.aoa_rad),
                        "gain_db": p.gain_db,
                    }
                    for p in row
                ]
                for row in self.candidate_paths
            ],
        }


def _ula_angle(vec: np.ndarray) -> float:
    """Cone angle of ``vec`` w.r.t. broadside of an x-aligned ULA, in [-pi/2, pi/2]."""
    return math.asin(float(np.clip(vec[0] / np.linalg.norm(vec), -1.0, 1.0)))


def _fspl_db(distance_m: float, carrier_ghz: float) -> float:
    wavelength = SPEED_OF_LIGHT / (carrier_ghz * 1e9)
    return 20.0 * math.log10(4.0 * math.pi * distance_m / wavelength)


def trajectory_points(config: ScenarioConfig) -> np.ndarray:
    step = config.trajectory_length_m / config.n_locations
    xs = -config.trajectory_length_m / 2 + step * (np.arange(config.n_locations) + 0.5)
    return np.stack([xs, np.zeros_like(xs)], axis=1)


def build_scenario(config: ScenarioConfig, seed) -> Scenario:
    """LoS plus ``n_scatterers`` single-bounce paths at random scatterer positions.

    Path 0 is the LoS path. Scatterers are drawn on either side of the street,
    so their AoD is fixed along the trajectory while the AoA drifts.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    points = trajectory_points(config)
    bs = np.array([0.0, config.bs_offset_m])

    lo, hi = config.scatterer_across_m
    scatterers = []
    for _ in range(config.n_scatterers):
        along = rng.uniform(-config.scatterer_along_m / 2, config.scatterer_along_m / 2)
        side = rng.choice([-1.0, 1.0])
        across = side * rng.uniform(lo, hi)
        if side > 0:
            across += config.bs_offset_m
        loss = rng.uniform(*config.scatter_loss_db)
        scatterers.append((np.array([along, across]), loss))

    rows = []
    for ue in points:
        los = ue - bs
        row = [
            CandidatePath(
                aod_rad=_ula_angle(los),
                aoa_rad=_ula_angle(-los),
                gain_db=-_fspl_db(float(np.linalg.norm(los)), config.carrier_ghz),
            )
        ]
        for pos, loss in scatterers:
            out, back = pos - bs, pos - ue
            length = float(np.linalg.norm(out) + np.linalg.norm(back))
            row.append(
                CandidatePath(
                    aod_rad=_ula_angle(out),
                    aoa_rad=_ula_angle(back),
                    gain_db=-_fspl_db(length, config.carrier_ghz) - loss,
                )
            )
        rows.append(tuple(row))
    return Scenario(
        candidate_paths=tuple(rows),
        bs_position=(float(bs[0]), float(bs[1])),
        trajectory_points=tuple((float(p[0]), float(p[1])) for p in points),
    )


# ---------------------------------------------------------------------------
# Skeleton process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockageModel:
    """Per-path two-state blockage chain, per unit location step.

    ``initial_blocked=None`` starts each path from its stationary law.
    """

    rho_stay_unblocked: float = 0.9
    rho_stay_blocked: float = 0.9
    initial_blocked: Optional[float] = None

    def __post_init__(self):
        for name in ("rho_stay_unblocked", "rho_stay_blocked", "initial_blocked"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name}={v!r} outside [0, 1]")

    def per_path_kernel(self, exact=False) -> np.ndarray:
        num = _exact if exact else float
        stay_u, stay_b = num(self.rho_stay_unblocked), num(self.rho_stay_blocked)
        return np.array([[stay_u, 1 - stay_u], [1 - stay_b, stay_b]], dtype=object if exact else float)

    def initial_law(self, exact=False) -> np.ndarray:
        num = _exact if exact else float
        if self.initial_blocked is not None:
            q = num(self.initial_blocked)
        else:
            leave_u = 1 - num(self.rho_stay_unblocked)
            leave_b = 1 - num(self.rho_stay_blocked)
            total = leave_u + leave_b
            q = leave_u / total if total != 0 else num(0)
        return np.array([1 - q, q], dtype=object if exact else float)


def _exact(v) -> Fraction:
    """Decimal reading of a float, e.g. 0.9 -> 9/10."""
    return v if isinstance(v, Fraction) else Fraction(str(v))


def _identity(n: int, exact: bool) -> np.ndarray:
    if exact:
        eye = np.full((n, n), Fraction(0), dtype=object)
        for i in range(n):
            eye[i, i] = Fraction(1)
        return eye
    return np.eye(n)


@dataclass(frozen=True, eq=False)
class SkeletonProcess:
    """Finite-state Markov chain over locations ``1..M`` with a skeleton label per state.

    Attributes:
        skeletons: ``skeletons[x-1][s]`` is the skeleton seen at location ``x``
            in state ``s`` (grid angles when built from codebooks).
        kernel: one-step row-stochastic transition matrix.
        initial: law of the state at location 1.
        n_bs, n_ue: array sizes used by the similarity ``d``.
        quantized: optional codebook indices matching ``skeletons``.
    """

    skeletons: tuple[tuple[PathSkeleton, ...], ...]
    kernel: np.ndarray
    initial: np.ndarray
    n_bs: int
    n_ue: int
    quantized: Optional[tuple[tuple[QuantizedSkeleton, ...], ...]] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        A = len(self.initial)
        if len(self.skeletons) < 1:
            raise InvalidArgumentError("process needs at least one location")
        if A < 1:
            raise InvalidArgumentError("alphabet must be non-empty")
        if self.kernel.shape != (A, A):
            raise InvalidArgumentError(f"kernel shape {self.kernel.shape} does not match alphabet {A}")
        if any(len(row) != A for row in self.skeletons):
            raise InvalidArgumentError("every location needs one skeleton per state")
        Ls = {s.L for row in self.skeletons for s in row}
        if len(Ls) != 1:
            raise InvalidArgumentError("all skeletons must share the same L")
        exact = self.kernel.dtype == object
        if exact != (self.initial.dtype == object):
            raise InvalidArgumentError("kernel and initial law must use the same number type")
        if np.any(self.kernel < 0) or np.any(self.initial < 0):
            raise InvalidArgumentError("probabilities must be non-negative")
        rows = self.kernel.sum(axis=1)
        if exact:
            if any(r != 1 for r in rows) or self.initial.sum() != 1:
                raise InvalidArgumentError("kernel rows and initial law must sum to exactly 1")
        elif np.any(np.abs(rows - 1.0) > 1e-12) or abs(self.initial.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("kernel rows and initial law must sum to 1 within 1e-12")

    @property
    def M(self) -> int:
        return len(self.skeletons)

    @property
    def n_states(self) -> int:
        return len(self.initial)

    @property
    def L(self) -> int:
        return self.skeletons[0][0].L

    @property
    def exact(self) -> bool:
        return self.kernel.dtype == object

    def _check_location(self, x):
        if not 1 <= x <= self.M:
            raise InvalidArgumentError(f"location {x} outside 1..{self.M}")

    def kernel_power(self, steps: int) -> np.ndarray:
        if steps < 0:
            raise InvalidArgumentError("steps must be >= 0")
        powers = self._cache.setdefault("powers", [_identity(self.n_states, self.exact)])
        while len(powers) <= steps:
            powers.append(powers[-1] @ self.kernel)
        return powers[steps]

    def marginal(self, x: int) -> np.ndarray:
        """Unconditional law of the state at location ``x``."""
        self._check_location(x)
        marg = self._cache.setdefault("marginals", {})
        if x not in marg:
            marg[x] = self.initial @ self.kernel_power(x - 1)
        return marg[x]

    def distance(self, x: int, y: int) -> np.ndarray:
        """``d(skeleton at x in state t, skeleton at y in state s)`` indexed ``[t, s]``."""
        self._check_location(x)
        self._check_location(y)
        dist = self._cache.setdefault("distance", {})
        if (x, y) not in dist:
            dist[(x, y)] = skeleton_distance_matrix(
                self.skeletons[x - 1], self.skeletons[y - 1], self.n_bs, self.n_ue
            )
        return dist[(x, y)]

    def dissimilar(self, x: int, y: int, gamma: float) -> np.ndarray:
        """0/1 matrix of the event ``d <= gamma``, indexed like :meth:`distance`."""
        return (self.distance(x, y) <= gamma).astype(np.int64)

    def state_of(self, x: int, label) -> int:
        """Resolve a measured skeleton label (or state index) to a state."""
        self._check_location(x)
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.n_states:
                raise ModelMismatchError(f"state {label} outside alphabet at location {x}")
            return int(label)
        if isinstance(label, QuantizedSkeleton):
            if self.quantized is None:
                raise ModelMismatchError("process carries no quantized labels")
            row = self.quantized[x - 1]
        else:
            row = self.skeletons[x - 1]
        hits = [s for s, lab in enumerate(row) if lab == label]
        if len(hits) != 1:
            what = "not in" if not hits else "ambiguous in"
            raise ModelMismatchError(f"skeleton {what} the alphabet at location {x}")
        return hits[0]


def derive_process(
    scenario: Scenario,
    blockage: BlockageModel,
    bs_book: Codebook,
    ue_book: Codebook,
    L: int,
    max_states: int = 64,
    exact: bool = False,
) -> SkeletonProcess:
    """Skeleton process induced by independent per-path blockage on ``scenario``."""
    P = scenario.n_paths
    if L < 1 or L > P:
        raise InvalidArgumentError(f"L={L} must lie in 1..{P} (candidate path count)")
    n_states = 2**P
    if n_states > max_states:
        raise CapacityError(f"{P} paths give {n_states} states, above the cap of {max_states}")

    kernel = np.ones((1, 1), dtype=object if exact else float)
    initial = np.ones(1, dtype=object if exact else float)
    if exact:
        kernel[0, 0] = initial[0] = Fraction(1)
    k1, i1 = blockage.per_path_kernel(exact), blockage.initial_law(exact)
    for _ in range(P):
        # later paths are more significant bits
        kernel = np.kron(k1, kernel)
        initial = np.kron(i1, initial)

    skeletons, quantized = [], []
    for row in scenario.candidate_paths:
        sk_row, q_row = [], []
        for s in range(n_states):
            alive = [
                PathComponent(gain=10.0 ** (p.gain_db / 20.0), aod_rad=p.aod_rad, aoa_rad=p.aoa_rad)
                for i, p in enumerate(row)
                if p is not None and not (s >> i) & 1
            ]
            q = quantize_skeleton(extract_skeleton(alive, L), bs_book, ue_book)
            q_row.append(q)
            sk_row.append(dequantize_skeleton(q, bs_book, ue_book))
        skeletons.append(tuple(sk_row))
        quantized.append(tuple(q_row))
    return SkeletonProcess(
        skeletons=tuple(skeletons),
        kernel=kernel,
        initial=initial,
        n_bs=bs_book.n_elements,
        n_ue=ue_book.n_elements,
        quantized=tuple(quantized),
    )


def blocked_paths(state: int, n_paths: int) -> list[bool]:
    return [bool((state >> p) & 1) for p in range(n_paths)]


def transition_kernel(process: SkeletonProcess, steps: int) -> np.ndarray:
    return process.kernel_power(steps)


def bridge_distribution(process: SkeletonProcess, x_l: int, x_h: int, x: int, s_l: int, s_h: int) -> np.ndarray:
    """Law of the state at ``x`` given the states at ``x_l`` and ``x_h``."""
    if not 1 <= x_l <= x <= x_h <= process.M:
        raise InvalidArgumentError(f"need 1 <= x_l <= x <= x_h <= M, got {x_l}, {x}, {x_h}")
    den = process.kernel_power(x_h - x_l)[s_l, s_h]
    if den == 0:
        raise ConditioningError(f"states {s_l}@{x_l} and {s_h}@{x_h} have zero joint probability")
    return process.kernel_power(x - x_l)[s_l, :] * process.kernel_power(x_h - x)[:, s_h] / den


def posterior_marginal(
    process: SkeletonProcess,
    x: int,
    left: Optional[tuple[int, int]] = None,
    right: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    """Law of the state at ``x`` given optional ``(location, state)`` evidence on each side."""
    process._check_location(x)
    if left is not None and right is not None:
        return bridge_distribution(process, left[0], right[0], x, left[1], right[1])
    if left is not None:
        x_l, s_l = left
        if x < x_l:
            raise InvalidArgumentError("left evidence must not lie right of x")
        return process.kernel_power(x - x_l)[s_l, :].copy()
    if right is not None:
        x_h, s_h = right
        if x > x_h:
            raise InvalidArgumentError("right evidence must not lie left of x")
        den = process.marginal(x_h)[s_h]
        if den == 0:
            raise ConditioningError(f"state {s_h} at location {x_h} has zero probability")
        return process.marginal(x) * process.kernel_power(x_h - x)[:, s_h] / den
    return process.marginal(x).copy()


def coverage_prob(
    process: SkeletonProcess,
    x: int,
    x_ref: int,
    gamma: float,
    left: Optional[tuple[int, int]] = None,
    right: Optional[tuple[int, int]] = None,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
):
    """``Pr{d(PS(x), ps(x_ref)) <= gamma | evidence}``.

    ``x_ref`` must be one of the evidence locations. The sum over the alphabet
    is exact unless ``samples`` is given, in which case it is a Monte Carlo
    estimate drawn from ``rng``.
    """
    evidence = dict(e for e in (left, right) if e is not None)
    if x_ref not in evidence:
        raise InvalidArgumentError(f"reference {x_ref} is not among the evidence locations")
    law = posterior_marginal(process, x, left, right)
    bad = process.dissimilar(x, x_ref, gamma)[:, evidence[x_ref]]
    if samples is None:
        return (law * bad).sum()
    if rng is None:
        raise InvalidArgumentError("Monte Carlo coverage needs an explicit rng")
    p = np.asarray(law, dtype=float)
    draws = rng.choice(process.n_states, size=samples, p=p / p.sum())
    return float(bad[draws].mean())


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _sample_rows(rng, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs`` (rows need not be normalized)."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def sample_posterior(
    process: SkeletonProcess,
    evidence: Mapping[int, int],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``n`` full state paths given observed states at some locations.

    Backward filtering then forward sampling; returns an ``(n, M)`` int array
    with column ``x-1`` holding the state at location ``x``.
    """
    M, A = process.M, process.n_states
    K = np.asarray(process.kernel, dtype=float)
    obs = np.ones((M, A))
    for x, s in evidence.items():
        process._check_location(x)
        obs[x - 1] = 0.0
        obs[x - 1, s] = 1.0
    beta = np.ones((M, A))
    for x in range(M - 2, -1, -1):
        beta[x] = K @ (obs[x + 1] * beta[x + 1])
        total = beta[x].sum()
        if total > 0:
            beta[x] /= total
    first = np.asarray(process.initial, dtype=float) * obs[0] * beta[0]
    if first.sum() <= 0:
        raise ConditioningError("evidence has zero probability")
    out = np.empty((n, M), dtype=np.int64)
    out[:, 0] = _sample_rows(rng, np.broadcast_to(first, (n, A)))
    for x in range(1, M):
        weights = K[out[:, x - 1]] * (obs[x] * beta[x])[None, :]
        if np.any(weights.sum(axis=1) <= 0):
            raise ConditioningError("evidence has zero probability")
        out[:, x] = _sample_rows(rng, weights)
    return out


def sample_path(process: SkeletonProcess, rng: np.random.Generator) -> list[int]:
    """One unconditional state path, index ``x-1`` for location ``x``."""
    return [int(s) for s in sample_posterior(process, {}, 1, rng)[0]]


# ---------------------------------------------------------------------------
# Ray-trace CSV
# ---------------------------------------------------------------------------


def import_raytrace_csv(path) -> Scenario:
    """Read ``location_index,path_rank,aod_deg,aoa_deg,gain_db`` rows into a scenario.

    Path ranks become path identities across locations, so rank ``r`` at
    every location is one blockable path. Row numbers in errors count the
    header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        entries: dict[int, dict[int, CandidatePath]] = {}
        for row_no, row in enumerate(reader, start=2):
            try:
                loc = int(row["location_index"])
                rank = int(row["path_rank"])
                aod, aoa, gain = (float(row[c]) for c in CSV_COLUMNS[2:])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: row {row_no}: {exc}") from None
            if loc < 1 or rank < 1:
                raise SchemaError(f"{path}: row {row_no}: indices must be 1-based")
            for name, ang in (("aod_deg", aod), ("aoa_deg", aoa)):
                if not -90.0 < ang <= 90.0:
                    raise SchemaError(f"{path}: row {row_no}: {name}={ang} outside (-90, 90]")
            if not math.isfinite(gain):
                raise SchemaError(f"{path}: row {row_no}: gain_db must be finite")
            slot = entries.setdefault(loc, {})
            if rank in slot:
                raise SchemaError(f"{path}: row {row_no}: duplicate path_rank {rank} at location {loc}")
            slot[rank] = CandidatePath(math.radians(aod), math.radians(aoa), gain)
    if not entries:
        raise SchemaError(f"{path}: no data rows")
    M = max(entries)
    for loc in range(1, M + 1):
        if loc not in entries:
            raise SchemaError(f"{path}: location_index {loc} missing (indices must be contiguous 1..{M})")
    width = max(max(slot) for slot in entries.values())
    rows = tuple(tuple(entries[loc].get(r) for r in range(1, width + 1)) for loc in range(1, M + 1))
    return Scenario(candidate_paths=rows)


def export_raytrace_csv(scenario: Scenario, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for loc, row in enumerate(scenario.candidate_paths, start=1):
            for rank, p in enumerate(row, start=1):
                if p is not None:
                    writer.writerow(
                        [loc, rank, repr(math.degrees(p.aod_rad)), repr(math.degrees(p.aoa_rad)), repr(p.gain_db)]
                    )


def process_from_labels(
    skeletons: Sequence[Sequence[PathSkeleton]],
    kernel,
    initial,
    n_bs: int,
    n_ue: int,
) -> SkeletonProcess:
    """Build a process directly from per-location skeleton labels.

    Lists of :class:`Fraction` (or ints) give an exact process; floats give a
    float one.
    """
    flat = [v for row in kernel for v in row] + list(initial)
    exact = all(isinstance(v, (Fraction, int)) for v in flat)
    conv = (lambda v: Fraction(v)) if exact else float
    K = np.array([[conv(v) for v in row] for row in kernel], dtype=object if exact else float)
    pi = np.array([conv(v) for v in initial], dtype=object if exact else float)
    return SkeletonProcess(
        skeletons=tuple(tuple(row) for row in skeletons), kernel=K, initial=pi, n_bs=n_bs, n_ue=n_ue
    )
