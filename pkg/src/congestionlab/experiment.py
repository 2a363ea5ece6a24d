"""End-to-end pipelines: data generation, training, and closed-loop runs.

A single master seed fans out to labeled sub-seeds (arrivals, parameter init,
shuffle, dropout) through a hash derivation, so switching the predictor never
perturbs the simulated traffic of a paired run.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from . import metrics as metrics_mod
from . import nn, simulator, telemetry, training
from .controller import (ControlAction, DecisionEntry, FlsController,
                         LstmController, NullController, PolicyConfig)
from .simulator import LoadScenario, SimConfig


def derive_seed(master_seed: int, label: str) -> int:
    """Deterministic 32-bit sub-seed for one named random stream."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def generate_telemetry(sim_config: SimConfig) -> list[telemetry.TelemetryRecord]:
    """Uncontrolled simulator run producing a labeled telemetry series."""
    return simulator.run(sim_config, controller_hook=None,
                         record_packets=False).telemetry


def generate_dataset(base_config: SimConfig, master_seed: int,
                     runs_per_scenario: int = 1
                     ) -> dict[str, list[list[telemetry.TelemetryRecord]]]:
    """One or more uncontrolled runs per load scenario, seeded independently."""
    out: dict[str, list[list[telemetry.TelemetryRecord]]] = {}
    for scenario in LoadScenario:
        series_list = []
        for run_idx in range(runs_per_scenario):
            cfg = dataclasses.replace(
                base_config, scenario=scenario, load_multiplier=None,
                seed=derive_seed(master_seed, f"gen/{scenario.value}/{run_idx}"))
            series_list.append(generate_telemetry(cfg))
        out[scenario.value] = series_list
    return out


@dataclass
class TrainedModel:
    model: nn.ModelParameters
    stats: telemetry.NormalizationStats
    report: training.TrainingReport
    split: telemetry.DatasetSplit


def train_pipeline(series_list: list[list[telemetry.TelemetryRecord]],
                   model_config: nn.ModelConfig,
                   training_config: training.TrainingConfig,
                   window: int = 10,
                   chronological_split: bool = False) -> TrainedModel:
    """ingest -> fit stats on the train split -> window -> split -> train.

    To keep the normalization honest, records are first windowed with
    identity stats to determine the split membership, then stats are fitted
    on the records underlying the training portion only.
    """
    all_records = [rec for series in series_list for rec in series]
    if not all_records:
        raise telemetry.TelemetryError("no telemetry records to train on")

    # provisional split on raw (un-normalized) windows to find the train share
    identity = telemetry.NormalizationStats(
        [0.0] * telemetry.FEATURE_COUNT, [1.0] * telemetry.FEATURE_COUNT)
    raw_samples = []
    sample_records = []  # the label-step record of each sample
    for series in series_list:
        if len(series) < window + 1:
            continue
        mat = telemetry.records_to_matrix(series)
        for t in range(window, len(series)):
            raw_samples.append((mat[t - window:t], series[t].label))
            sample_records.append(series[t])
    if len(raw_samples) < 10:
        raise telemetry.TelemetryError(
            f"only {len(raw_samples)} windowed samples; need at least 10")

    n = len(raw_samples)
    order = np.arange(n)
    if not chronological_split:
        rng = np.random.default_rng(training_config.seed)
        rng.shuffle(order)
    n_train = int(np.floor(0.8 * n))
    n_val = int(np.floor(0.1 * n))

    train_idx = order[:n_train]
    train_feature_rows = np.concatenate(
        [raw_samples[i][0] for i in train_idx])
    stats = telemetry.NormalizationStats(
        train_feature_rows.min(axis=0), train_feature_rows.max(axis=0))

    def build(idx_list):
        return [telemetry.SequenceSample(
            inputs=stats.transform(raw_samples[i][0]),
            target=telemetry.one_hot(raw_samples[i][1])) for i in idx_list]

    split = telemetry.DatasetSplit(
        train=build(train_idx),
        validation=build(order[n_train:n_train + n_val]),
        test=build(order[n_train + n_val:]),
    )

    model = nn.init_parameters(
        model_config, seed=derive_seed(training_config.seed, "init"))
    model, report = training.train(model, split, training_config)
    return TrainedModel(model=model, stats=stats, report=report, split=split)


def make_controller(predictor: str, model=None, stats=None,
                    policy: PolicyConfig | None = None, fls_config=None,
                    window: int = 10):
    if predictor == "lstm":
        if model is None or stats is None:
            raise ValueError("lstm predictor needs a model and stats")
        return LstmController(model, stats, policy=policy, window_length=window)
    if predictor == "fls":
        return FlsController(fls_config=fls_config, policy=policy)
    if predictor == "none":
        return NullController()
    raise ValueError(f"unknown predictor {predictor!r}")


@dataclass
class ExperimentRun:
    report: metrics_mod.ExperimentReport
    decisions: list[DecisionEntry]
    sim_result: simulator.SimResult


def run_experiment(sim_config: SimConfig, controller,
                   policy: PolicyConfig | None = None,
                   record_packets: bool = False) -> ExperimentRun:
    """One closed-loop run: simulator + controller + decision log + report."""
    policy = policy or getattr(controller, "policy", PolicyConfig())
    decisions: list[DecisionEntry] = []

    def hook(record):
        action = controller.control_step(record)
        score = getattr(controller, "last_score", None)
        decisions.append(DecisionEntry(
            time_s=record.timestamp_s,
            score=score,
            threshold=policy.threshold,
            action=action,
            throughput_kbps=record.throughput_kbps,
            predictor=controller.predictor_id,
        ))
        return action

    result = simulator.run(sim_config, controller_hook=hook,
                           record_packets=record_packets)
    intervals = [metrics_mod.interval_metrics(stats, sim_config)
                 for stats in result.intervals]
    report = metrics_mod.ExperimentReport(
        scenario=sim_config.scenario.value,
        predictor=controller.predictor_id,
        seed=sim_config.seed,
        config_digest=metrics_mod.config_digest(dataclasses.asdict(sim_config)),
        intervals=intervals,
        summary=metrics_mod.aggregate(intervals),
    )
    return ExperimentRun(report=report, decisions=decisions, sim_result=result)


def replay_decisions(rows: list[dict], threshold: float = 0.5
                     ) -> list[tuple[int, ControlAction, ControlAction]]:
    """Re-run decide() over a decision-log score column; returns mismatches
    as (row_index, recorded, recomputed).  Warm-up rows (empty score) are
    skipped."""
    from .controller import decide
    mismatches = []
    previous = None
    for idx, row in enumerate(rows):
        if row["score"] in ("", None):
            previous = None
            continue
        score = float(row["score"])
        recomputed = decide(score, previous, threshold)
        recorded = ControlAction.parse(row["action"])
        if recorded != recomputed:
            mismatches.append((idx, recorded, recomputed))
        previous = score
    return mismatches
