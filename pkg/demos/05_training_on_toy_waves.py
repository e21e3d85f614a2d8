"""Training through the compensation on the sinusoid toy task.

Trains a compensated model and a plain ODE-RNN on 64 waves with 30% of
the points observed, then scores every inference mode on held-out waves.
Takes a few minutes on one CPU.

Run: python3 demos/05_training_on_toy_waves.py [epochs]
"""

import sys

from cssc.core import RunConfig
from cssc.data import ToySpec, generate_toy, split_dataset
from cssc.odernn import OdeRnnModel
from cssc.train import evaluate, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 100
train_set, val_set, test_set = split_dataset(
    generate_toy(ToySpec(observation_fraction=0.3, seed=1)), seed=0)
print(f"{len(train_set)} training, {len(val_set)} validation, {len(test_set)} test waves")


def report(epoch_metrics):
    if epoch_metrics.epoch % 20 == 0:
        print(f"  epoch {epoch_metrics.epoch:4d}  train mse {epoch_metrics.train_mse:.2e}  "
              f"val mse {epoch_metrics.val_mse:.2e}")


models = {}
for name, space in (("compensated", "output"), ("plain ODE-RNN", "none")):
    cfg = RunConfig(compensation_space=space, epochs=epochs, patience=40)
    print(f"\ntraining the {name} model")
    res = train(OdeRnnModel.init(1, cfg), train_set, cfg, val_set, progress=report)
    print(f"  best validation epoch {res.best_epoch}")
    models[space] = res.model

print("\ntest MSE")
rows = [("cssc", models["output"]), ("prehoc (trained with c, run without)", models["output"]),
        ("odernn", models["none"]), ("posthoc (trained without c, run with)", models["none"]),
        ("natural spline through observations", None)]
modes = ["cssc", "prehoc", "odernn", "posthoc", "spline_baseline"]
for (label, model), mode in zip(rows, modes):
    print(f"  {label:40s} {evaluate(model, test_set, mode):.3e}")
