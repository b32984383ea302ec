"""Experiment loop, beam-search accounting, SNR evaluation and report files."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .arraysim import (
    Codebook,
    PathComponent,
    best_pair_exhaustive,
    dft_codebook,
    make_channel,
    snr_db,
    zero_channel,
)
from .baselines import DEFAULT_FIXED_BOUNDARIES, exhaustive_plan, fixed_plan, greedy_plan
from .errors import BeamPlanError, InvalidArgumentError, SchemaError
from .planner import Partition, PlannerConfig, realize_plan, solve
from .stochastic import BlockageModel, ScenarioConfig, build_scenario, derive_process, sample_path

METHODS = ("proposed", "exhaustive", "greedy", "fixed")


def _positive_int(v, name):
    if isinstance(v, bool) or int(v) != v or v < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def count_presetup_searches(K: int, f_size: int, w_size: int) -> int:
    """Full codebook sweeps at ``K`` reference points."""
    return _positive_int(K, "K") * _positive_int(f_size, "f_size") * _positive_int(w_size, "w_size")


def count_runtime_searches(K: int, L: int) -> int:
    """``L x L`` skeleton pairs tried at each of ``K`` references."""
    return _positive_int(K, "K") * _positive_int(L, "L") ** 2


@dataclass(frozen=True)
class ExperimentConfig:
    # geometry
    n_locations: int = 10
    trajectory_length_m: float = 10.0
    bs_offset_m: float = 10.0
    n_scatterers: int = 2
    scatterer_along_m: float = 40.0
    scatterer_across_m: tuple[float, float] = (5.0, 30.0)
    scatter_loss_db: tuple[float, float] = (6.0, 12.0)
    carrier_ghz: float = 28.0
    # blockage
    rho_stay_unblocked: float = 0.9
    rho_stay_blocked: float = 0.9
    initial_blocked: Optional[float] = None
    # arrays and codebooks
    n_bs: int = 64
    n_ue: int = 4
    bs_codebook_size: int = 128
    ue_codebook_size: int = 128
    # planner
    L: int = 3
    gamma: float = 0.2
    epsilon: float = 0.1
    max_states: int = 64
    # link budget
    p_dbm: float = 10.0
    noise_dbm: float = -94.0
    # experiment
    n_trajectories: int = 100
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    fixed_boundaries: tuple[int, ...] = DEFAULT_FIXED_BOUNDARIES
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("scatterer_across_m", "scatter_loss_db", "methods", "fixed_boundaries"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.methods:
            raise InvalidArgumentError("method list must not be empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidArgumentError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        for name in ("n_bs", "n_ue", "bs_codebook_size", "ue_codebook_size", "L", "n_trajectories", "n_jobs"):
            _positive_int(getattr(self, name), name)
        self.scenario_config().validate()
        self.planner_config()
        self.blockage_model()

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            n_locations=self.n_locations,
            trajectory_length_m=self.trajectory_length_m,
            bs_offset_m=self.bs_offset_m,
            n_scatterers=self.n_scatterers,
            scatterer_along_m=self.scatterer_along_m,
            scatterer_across_m=self.scatterer_across_m,
            scatter_loss_db=self.scatter_loss_db,
            carrier_ghz=self.carrier_ghz,
        )

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(gamma=self.gamma, epsilon=self.epsilon, L=self.L, max_states=self.max_states)

    def blockage_model(self) -> BlockageModel:
        return BlockageModel(self.rho_stay_unblocked, self.rho_stay_blocked, self.initial_blocked)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise SchemaError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def evaluate_snr(
    partition: Partition,
    channels: Sequence[np.ndarray],
    f_book: Codebook,
    w_book: Codebook,
    p_dbm: float = 10.0,
    noise_dbm: float = -94.0,
) -> list[float]:
    """SNR at every location using the best codebook pair found at its region's reference."""
    if len(channels) != partition.M:
        raise InvalidArgumentError(f"need {partition.M} channels, got {len(channels)}")
    pairs = {}
    out = []
    for x in range(1, partition.M + 1):
        ref = partition.reference_of(x)
        if ref not in pairs:
            fi, wi, _, _ = best_pair_exhaustive(channels[ref - 1], f_book, w_book, p_dbm, noise_dbm)
            pairs[ref] = (fi, wi)
        fi, wi = pairs[ref]
        out.append(snr_db(channels[x - 1], f_book.beam(fi), w_book.beam(wi), p_dbm, noise_dbm))
    return out


def _books(cfg: ExperimentConfig):
    return dft_codebook(cfg.n_bs, cfg.bs_codebook_size), dft_codebook(cfg.n_ue, cfg.ue_codebook_size)


def simulate_trajectory(cfg: ExperimentConfig, t: int, books=None) -> dict:
    """One trajectory: scenario, sampled blockage, every method's partition, counts and SNR."""
    f_book, w_book = books if books is not None else _books(cfg)
    scenario_seq, path_seq, fading_seq = np.random.SeedSequence([cfg.seed, t]).spawn(3)
    scenario = build_scenario(cfg.scenario_config(), scenario_seq)
    process = derive_process(scenario, cfg.blockage_model(), f_book, w_book, cfg.L, cfg.max_states)
    states = sample_path(process, np.random.default_rng(path_seq))

    fading = np.random.default_rng(fading_seq)
    channels = []
    for x, row in enumerate(scenario.candidate_paths, start=1):
        phases = fading.uniform(0.0, 2.0 * math.pi, size=len(row))
        alive = [
            PathComponent(10.0 ** (p.gain_db / 20.0) * complex(math.cos(ph), math.sin(ph)), p.aod_rad, p.aoa_rad)
            for i, (p, ph) in enumerate(zip(row, phases))
            if p is not None and not (states[x - 1] >> i) & 1
        ]
        channels.append(make_channel(alive, cfg.n_bs, cfg.n_ue) if alive else zero_channel(cfg.n_bs, cfg.n_ue))

    pcfg = cfg.planner_config()
    out = {"trajectory": t, "states": states, "methods": {}}
    for method in cfg.methods:
        if method == "proposed":
            part = realize_plan(solve(process, pcfg), states)
        elif method == "exhaustive":
            part = exhaustive_plan(process.M)
        elif method == "greedy":
            seen = [process.skeletons[x][s] for x, s in enumerate(states)]
            part = greedy_plan(seen, pcfg, process.n_bs, process.n_ue)
        else:
            part = fixed_plan(process.M, cfg.fixed_boundaries)
        K = part.K
        out["methods"][method] = {
            "K": K,
            "presetup": count_presetup_searches(K, f_book.size, w_book.size),
            "runtime": count_runtime_searches(K, cfg.L),
            "snr_db": evaluate_snr(part, channels, f_book, w_book, cfg.p_dbm, cfg.noise_dbm),
            "partition": part.to_dict(),
        }
    return out


def _run_one(args):
    cfg, t = args
    try:
        return simulate_trajectory(cfg, t)
    except BeamPlanError as exc:
        raise type(exc)(f"trajectory {t}: {exc}") from exc


def _mean_db(values: Sequence[float]) -> float:
    linear = np.mean([0.0 if v == -math.inf else 10.0 ** (v / 10.0) for v in values])
    return 10.0 * math.log10(linear) if linear > 0 else -math.inf


@dataclass
class MethodSummary:
    presetup: list[int]
    runtime: list[int]
    k: list[int]
    snr_db: list[list[float]]  # [trajectory][location]

    @property
    def presetup_mean(self) -> float:
        return float(np.mean(self.presetup))

    @property
    def runtime_mean(self) -> float:
        return float(np.mean(self.runtime))

    @property
    def k_mean(self) -> float:
        return float(np.mean(self.k))

    @property
    def snr_per_location(self) -> list[float]:
        """Mean SNR per location, averaged in linear power then converted to dB."""
        return [_mean_db(col) for col in zip(*self.snr_db)]

    def k_histogram(self) -> dict[int, int]:
        vals, counts = np.unique(self.k, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


@dataclass
class Report:
    config: dict
    methods: dict[str, MethodSummary]
    partitions: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def M(self) -> int:
        return int(self.config["n_locations"])

    def snr_gap(self, method: str, baseline: str = "exhaustive") -> float:
        """Mean over locations of ``baseline - method`` per-location mean SNR (dB)."""
        a = self.methods[baseline].snr_per_location
        b = self.methods[method].snr_per_location
        return float(np.mean([x - y for x, y in zip(a, b)]))

    def region_size_histogram(self, method: str) -> dict[int, int]:
        hist: dict[int, int] = {}
        for part in self.partitions.get(method, []):
            for a, b in zip([0] + part["boundaries"][:-1], part["boundaries"]):
                hist[b - a] = hist.get(b - a, 0) + 1
        return dict(sorted(hist.items()))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "methods": {
                name: {
                    "presetup": m.presetup,
                    "runtime": m.runtime,
                    "k": m.k,
                    "snr_db": m.snr_db,
                    "presetup_mean": m.presetup_mean,
                    "runtime_mean": m.runtime_mean,
                    "k_mean": m.k_mean,
                    "k_histogram": {str(k): v for k, v in m.k_histogram().items()},
                    "region_size_histogram": {str(k): v for k, v in self.region_size_histogram(name).items()},
                    "snr_per_location_db": m.snr_per_location,
                }
                for name, m in self.methods.items()
            },
            "partitions": self.partitions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        try:
            methods = {
                name: MethodSummary(
                    presetup=[int(v) for v in m["presetup"]],
                    runtime=[int(v) for v in m["runtime"]],
                    k=[int(v) for v in m["k"]],
                    snr_db=[[float(v) for v in row] for row in m["snr_db"]],
                )
                for name, m in d["methods"].items()
            }
            return cls(config=d["config"], methods=methods, partitions=d.get("partitions", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed report: {exc!r}") from exc

    @classmethod
    def from_json(cls, path) -> "Report":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def run_experiment(config: ExperimentConfig) -> Report:
    """Run every method on ``n_trajectories`` seeded trajectories.

    Trajectory ``t`` draws from its own stream seeded by ``(seed, t)``, so the
    result does not depend on ``n_jobs``.
    """
    jobs = [(config, t) for t in range(config.n_trajectories)]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        books = _books(config)
        results = []
        for cfg, t in jobs:
            try:
                results.append(simulate_trajectory(cfg, t, books))
            except BeamPlanError as exc:
                raise type(exc)(f"trajectory {t}: {exc}") from exc

    methods, partitions = {}, {}
    for name in config.methods:
        rows = [r["methods"][name] for r in results]
        methods[name] = MethodSummary(
            presetup=[r["presetup"] for r in rows],
            runtime=[r["runtime"] for r in rows],
            k=[r["K"] for r in rows],
            snr_db=[r["snr_db"] for r in rows],
        )
        partitions[name] = [r["partition"] for r in rows]
    return Report(config=config.to_dict(), methods=methods, partitions=partitions)


REPORT_FILES = ("counts.csv", "snr_per_location.csv", "regions.json", "report.json")


def emit_report(report: Report, out_dir, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    """Write ``counts.csv``, ``snr_per_location.csv``, ``regions.json`` and ``report.json``."""
    bad = set(formats) - {"json", "csv"}
    if bad:
        raise InvalidArgumentError(f"unknown formats {sorted(bad)}")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out / "counts.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["method", "presetup_mean", "runtime_mean", "k_mean"])
                for name, m in report.methods.items():
                    w.writerow([name, repr(m.presetup_mean), repr(m.runtime_mean), repr(m.k_mean)])
            written.append(path)
            path = out / "snr_per_location.csv"
            names = list(report.methods)
            cols = [report.methods[n].snr_per_location for n in names]
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["location"] + names)
                for x in range(report.M):
                    w.writerow([x + 1] + [repr(c[x]) for c in cols])
            written.append(path)
        if "json" in formats:
            path = out / "regions.json"
            path.write_text(json.dumps(report.partitions, indent=1, sort_keys=True), encoding="utf-8")
            written.append(path)
            path = out / "report.json"
            path.write_text(report.to_json(), encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written
