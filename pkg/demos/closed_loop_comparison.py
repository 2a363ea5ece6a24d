"""Benchmark the closed loop: no controller vs fuzzy vs LSTM.

Trains a model, then runs paired High-load experiments (identical traffic
seeds across predictors) and prints the per-seed and median loss/delay
figures, plus one decision trace so you can watch the policy alternate
between traffic shaping and letting the drained queue refill.

Usage: python demos/closed_loop_comparison.py
"""

import dataclasses

import numpy as np

from congestionlab import experiment, training
from congestionlab.nn import ModelConfig
from congestionlab.simulator import LoadScenario, SimConfig

# -- train (same corpus shape as the demo trainer, slightly larger model) --
base = SimConfig(duration_s=110.0, telemetry_interval_s=1.0, seed=0)
series_list = []
for scenario in LoadScenario:
    for k in range(5):
        cfg = dataclasses.replace(
            base, scenario=scenario,
            seed=experiment.derive_seed(123, f"gen/{scenario.value}/{k}"))
        series_list.append(experiment.generate_telemetry(cfg))
trained = experiment.train_pipeline(
    series_list, ModelConfig(hidden_units=32),
    training.TrainingConfig(max_epochs=20, patience=8, seed=11))
print(f"trained to epoch {trained.report.stopping_epoch}, test accuracy "
      f"{training.evaluate(trained.model, trained.split.test).accuracy:.3f}\n")

# -- paired closed-loop runs ----------------------------------------------
predictors = ("none", "fls", "lstm")
losses = {p: [] for p in predictors}
delays = {p: [] for p in predictors}
print(f"{'seed':>4}  " + "  ".join(f"{p + ' loss':>10} {p + ' ms':>8}"
                                   for p in predictors))
for s in range(5):
    seed = experiment.derive_seed(999, f"pair/{s}")
    sim_config = SimConfig(scenario=LoadScenario.HIGH, seed=seed)
    row = [f"{s:>4}"]
    for predictor in predictors:
        controller = experiment.make_controller(
            predictor, model=trained.model, stats=trained.stats)
        summary = experiment.run_experiment(sim_config,
                                            controller).report.summary
        losses[predictor].append(summary.loss_rate)
        delays[predictor].append(summary.mean_delay_ms)
        row.append(f"{summary.loss_rate:>10.4f} {summary.mean_delay_ms:>8.1f}")
    print("  ".join(row))

print("\nmedians:")
for predictor in predictors:
    print(f"  {predictor:<5} loss {np.median(losses[predictor]):.4f} "
          f"delay {np.median(delays[predictor]):.1f} ms")

# -- one decision trace ----------------------------------------------------
print("\nLSTM decision trace (seed pair/0):")
sim_config = SimConfig(scenario=LoadScenario.HIGH,
                       seed=experiment.derive_seed(999, "pair/0"))
controller = experiment.make_controller("lstm", model=trained.model,
                                        stats=trained.stats)
run = experiment.run_experiment(sim_config, controller)
for entry, interval in zip(run.decisions, run.report.intervals):
    score = "  --" if entry.score is None else f"{entry.score:.2f}"
    print(f"  t={entry.time_s:>5.0f}  score {score}  action "
          f"{str(entry.action):<15}  interval loss {interval.loss_rate:.3f}")
