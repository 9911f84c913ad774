"""Monte Carlo sweeps over SINR targets and random channel draws.

Every (target, draw) pair is one trial.  Channels depend on the draw only, so
the same draws are reused across the target grid; all methods of a trial are
scored against one shared set of sampled channel errors.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import ScenarioConfig, dbm_to_watts, generate_channels, generate_layout, watts_to_dbm
from .model import InvalidInputError, SystemConfig, from_db, sample_errors, sinr_all, to_db
from .problems import (RANK_ONE_TOL, DesignKind, ExtractionError, extract_beamformers,
                       solve_design)

logger = logging.getLogger(__name__)

ALL_METHODS = (DesignKind.NOMINAL_MCBF, DesignKind.NOMINAL_SBF,
               DesignKind.ROBUST_MCBF, DesignKind.ROBUST_SBF)

TRIALS_HEADER = ("trial", "gamma_db", "method", "status", "power_dbm", "min_sinr_db",
                 "rank_one", "ms")
AGGREGATE_HEADER = ("gamma_db", "method", "trials", "feasible", "feasibility_pct",
                    "all_feasible", "avg_power_dbm", "avg_min_sinr_db", "rank_one_pct",
                    "insufficient_data")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    gamma_grid_db: tuple = (1.0, 3.0, 5.0, 7.0, 9.0, 11.0)
    num_channel_draws: int = 200
    num_error_draws: int = 100
    methods: tuple = ALL_METHODS
    base_seed: int = 0
    output_path: str = "results"
    num_cells: int = 3
    users_per_cell: int = 2
    num_antennas: int = 5
    power_weight: float = 1.0
    # None means "equal to the noise power"
    interference_cap_dbm: Optional[float] = None
    randomization_trials: int = 100
    extraction_error_draws: int = 1000
    record_timing: bool = False

    def __post_init__(self):
        grid = tuple(float(g) for g in self.gamma_grid_db)
        if not grid:
            raise InvalidInputError("gamma_grid_db must not be empty")
        if self.num_channel_draws < 1 or self.num_error_draws < 1:
            raise InvalidInputError("draw counts must be >= 1")
        methods = tuple(DesignKind(m) for m in self.methods)
        if not methods:
            raise InvalidInputError("at least one method is required")
        if len(set(methods)) != len(methods):
            raise InvalidInputError("duplicate methods")
        if self.randomization_trials < 1 or self.extraction_error_draws < 1:
            raise InvalidInputError("extraction counts must be >= 1")
        object.__setattr__(self, "gamma_grid_db", grid)
        object.__setattr__(self, "methods", methods)

    @property
    def noise_power(self) -> float:
        return dbm_to_watts(self.scenario.noise_power_dbm)

    @property
    def interference_cap(self) -> float:
        if self.interference_cap_dbm is None:
            return self.noise_power
        return dbm_to_watts(self.interference_cap_dbm)

    def system(self, gamma_db: float) -> SystemConfig:
        return SystemConfig.uniform(self.num_cells, self.users_per_cell, self.num_antennas,
                                    from_db(gamma_db), self.noise_power,
                                    self.interference_cap, self.power_weight)


@dataclass
class MethodOutcome:
    status: str
    sum_power_watts: Optional[float]
    min_sinr_db: Optional[float]
    rank_one: bool
    max_rank_one_gap: Optional[float]
    solve_time_ms: float
    randomized: bool = False


@dataclass
class TrialRecord:
    trial_index: int
    gamma_db: float
    outcomes: dict          # DesignKind -> MethodOutcome

    def all_feasible(self, methods: Iterable[DesignKind]) -> bool:
        return all(self.outcomes[m].status == "optimal" and self.outcomes[m].min_sinr_db is not None
                   for m in methods)


def trial_seeds(base_seed: int, trial_index: int) -> tuple:
    """(layout, channel, error) seeds of a draw; independent of the target."""
    ss = np.random.SeedSequence(base_seed + trial_index)
    return tuple(int(s) for s in ss.generate_state(3))


def draw_channels(cfg: ExperimentConfig, trial_index: int):
    s_layout, s_chan, s_err = trial_seeds(cfg.base_seed, trial_index)
    layout = generate_layout(cfg.scenario, cfg.num_cells, cfg.users_per_cell, s_layout)
    channels = generate_channels(layout, cfg.scenario, s_chan, cfg.num_antennas)
    errors = sample_errors(channels, cfg.num_error_draws, np.random.default_rng(s_err))
    return channels, errors


def run_trial(cfg: ExperimentConfig, gamma_db: float, trial_index: int) -> TrialRecord:
    channels, errors = draw_channels(cfg, trial_index)
    system = cfg.system(gamma_db)
    realized = channels.nominal[None] + errors
    outcomes = {}
    for method in cfg.methods:
        try:
            sol = solve_design(method, channels, system)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            logger.warning("trial %d gamma %.1f %s: %s", trial_index, gamma_db, method.value, exc)
            outcomes[method] = MethodOutcome("numerical-failure", None, None, False, None, 0.0)
            continue
        if not sol.is_optimal:
            outcomes[method] = MethodOutcome(sol.status, None, None, False, None,
                                             sol.solve_time_ms)
            continue
        gap = float(sol.rank_one_gap.max())
        rank_one = gap <= RANK_ONE_TOL
        if not rank_one:
            logger.info("trial %d gamma %.1f %s: rank-one gap %.3g",
                        trial_index, gamma_db, method.value, gap)
        min_sinr, randomized = None, False
        try:
            beams, report = extract_beamformers(
                sol, channels, system, cfg.randomization_trials,
                seed=trial_seeds(cfg.base_seed, trial_index)[2] + 1,
                error_samples=cfg.extraction_error_draws)
            min_sinr = float(to_db(sinr_all(realized, beams, system).min()))
            randomized = report.randomized
        except ExtractionError:
            logger.info("trial %d gamma %.1f %s: relaxation loose, no beamformers",
                        trial_index, gamma_db, method.value)
        outcomes[method] = MethodOutcome(sol.status, sol.objective, min_sinr, rank_one, gap,
                                         sol.solve_time_ms, randomized)
    return TrialRecord(trial_index, float(gamma_db), outcomes)


def _run_task(args):
    cfg, gamma_db, trial_index = args
    return run_trial(cfg, gamma_db, trial_index)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list:
    """All trials, ordered by (target, trial index) whatever the worker count."""
    tasks = [(cfg, g, t) for g in cfg.gamma_grid_db for t in range(cfg.num_channel_draws)]
    if workers <= 1:
        return [_run_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


@dataclass
class AggregateRow:
    gamma_db: float
    method: DesignKind
    trials: int
    feasible: int
    all_feasible: int
    avg_power_dbm: Optional[float]
    avg_min_sinr_db: Optional[float]
    rank_one_pct: Optional[float]

    @property
    def feasibility_pct(self) -> float:
        return 100.0 * self.feasible / self.trials if self.trials else float("nan")

    @property
    def insufficient_data(self) -> bool:
        return self.all_feasible == 0


def aggregate(records: Sequence[TrialRecord], methods: Optional[Sequence] = None) -> list:
    """Per-target, per-method summary rows.

    Power is averaged in watts and then converted; the minimum SINR is the
    mean of each trial's minimum (in dB).  Both use only the trials where
    every method is feasible.  Feasibility counts all trials.
    """
    if not records:
        raise InvalidInputError("no records to aggregate")
    if methods is None:
        methods = list(records[0].outcomes)
    methods = [DesignKind(m) for m in methods]
    rows = []
    for gamma in sorted({r.gamma_db for r in records}):
        batch = [r for r in records if r.gamma_db == gamma]
        joint = [r for r in batch if r.all_feasible(methods)]
        for m in methods:
            outs = [r.outcomes[m] for r in batch]
            solved = [o for o in outs if o.status == "optimal"]
            power = sinr = None
            if joint:
                power = float(watts_to_dbm(np.mean([r.outcomes[m].sum_power_watts for r in joint])))
                sinr = float(np.mean([r.outcomes[m].min_sinr_db for r in joint]))
            r1 = 100.0 * sum(o.rank_one for o in solved) / len(solved) if solved else None
            rows.append(AggregateRow(gamma, m, len(batch), len(solved), len(joint),
                                     power, sinr, r1))
    return rows


def _fmt(v, spec="{:.6f}"):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return spec.format(v)


def write_trials_csv(records: Sequence[TrialRecord], path, record_timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIALS_HEADER)
        for r in records:
            for m, o in r.outcomes.items():
                power = None if o.sum_power_watts is None else float(watts_to_dbm(o.sum_power_watts))
                w.writerow([r.trial_index, _fmt(r.gamma_db, "{:g}"), m.value, o.status,
                            _fmt(power), _fmt(o.min_sinr_db),
                            int(o.rank_one) if o.status == "optimal" else "",
                            _fmt(o.solve_time_ms, "{:.1f}") if record_timing else ""])


def write_aggregate_csv(rows: Sequence[AggregateRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for row in rows:
            w.writerow([_fmt(row.gamma_db, "{:g}"), row.method.value, row.trials, row.feasible,
                        _fmt(row.feasibility_pct, "{:.2f}"), row.all_feasible,
                        _fmt(row.avg_power_dbm), _fmt(row.avg_min_sinr_db),
                        _fmt(row.rank_one_pct, "{:.2f}"), int(row.insufficient_data)])


def read_trials_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
