"""End-to-end training through the compensation, and evaluation modes."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import spline as sp
from .core import CsscError, RunConfig, Trajectory
from .nn import autodiff as ad
from .nn.autodiff import Tape
from .nn.optim import AdaMax
from .odernn import OdeRnnModel, TrajectoryBatch, compensated_output, make_batches

log = logging.getLogger(__name__)

EVAL_MODES = ("cssc", "hidden", "odernn", "posthoc", "prehoc", "spline_baseline")
METRIC_FIELDS = ("epoch", "train_mse", "train_penalty", "val_mse", "mode")


class LengthMismatch(CsscError, ValueError):
    pass


class NonFiniteLoss(CsscError, FloatingPointError):
    pass


@dataclass(frozen=True)
class LossReport:
    mse: float
    penalty: float
    total: float


def loss_terms(outputs, compensations, targets, alpha: float):
    """``(mse, penalty, total)``; tape-aware.

    ``mse`` is the mean over points of ``||x - o_hat||^2`` and ``penalty``
    the mean of ``||c||^2``; ``total = mse + alpha * penalty``.
    """
    out_shape = np.shape(ad.value(outputs))
    if out_shape != np.shape(targets):
        raise LengthMismatch(f"outputs {out_shape} vs targets {np.shape(targets)}")
    if out_shape[-2] < 1:
        raise LengthMismatch("need at least one supervised point")
    diff = outputs - targets
    n_points = int(np.prod(out_shape[:-1]))
    mse = ad.sum(diff * diff) * (1.0 / n_points)
    if compensations is None:
        penalty = 0.0
    else:
        c_shape = np.shape(ad.value(compensations))
        if c_shape[:-1] != out_shape[:-1]:
            raise LengthMismatch("compensations do not match outputs")
        penalty = ad.sum(compensations * compensations) * (1.0 / n_points)
    return mse, penalty, mse + alpha * penalty


def loss(outputs, compensations, targets, alpha: float) -> LossReport:
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if outputs.ndim == 1:
        outputs, targets = outputs[:, None], targets[:, None]
    comps = None
    if compensations is not None:
        comps = np.asarray(compensations, dtype=np.float64)
        if comps.ndim == 1:
            comps = comps[:, None]
    mse, pen, _ = loss_terms(outputs, comps, targets, alpha)
    mse, pen = float(mse), float(pen)
    return LossReport(mse, pen, mse + alpha * pen)


@dataclass
class EpochMetrics:
    epoch: int
    train_mse: float
    train_penalty: float
    val_mse: float
    mode: str

    def row(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_FIELDS}


@dataclass
class TrainResult:
    model: OdeRnnModel
    history: list = field(default_factory=list)
    best_epoch: int = 0
    initial_val_mse: float = float("nan")


def batch_loss(model: OdeRnnModel, batch: TrajectoryBatch, config: RunConfig, space: str):
    res = compensated_output(model, batch, config=config, space=space)
    return loss_terms(res.output, res.compensation, batch.values, config.alpha)


def loss_and_grad(model: OdeRnnModel, batch: TrajectoryBatch, config: RunConfig | None = None,
                  space: str | None = None):
    """Total loss and its gradient with respect to every model parameter."""
    config = config or model.config
    space = space or config.train_space
    params = model.parameters()
    with Tape() as tape:
        leaves = {k: tape.variable(v) for k, v in params.items()}
        mse, pen, total = batch_loss(model.with_parameters(leaves), batch, config, space)
    grads = tape.gradient(total, list(leaves.values()))
    report = LossReport(float(ad.value(mse)), float(ad.value(pen)), float(ad.value(total)))
    return report, dict(zip(leaves.keys(), grads))


def _mode_name(config: RunConfig) -> str:
    if config.prehoc:
        return "prehoc"
    if config.posthoc:
        return "posthoc"
    return {"output": "cssc", "hidden": "hidden", "none": "odernn"}[config.compensation_space]


def train(model: OdeRnnModel, dataset: Sequence[Trajectory], config: RunConfig | None = None,
          val_set: Sequence[Trajectory] | None = None, progress=None) -> TrainResult:
    """AdaMax on the compensated loss with early stopping on validation MSE.

    The returned model holds the parameters of the best validation epoch
    (the last epoch when no validation set is given).
    """
    if not dataset:
        raise ValueError("empty training set")
    config = config or model.config
    model = model.with_config(config)
    batches = make_batches(dataset, config.batch_size)
    opt = AdaMax(config.learning_rate, config.beta1, config.beta2, config.adamax_eps)
    mode = _mode_name(config)
    # model selection always scores the path that was trained
    eval_mode = {"output": "cssc", "hidden": "hidden", "none": "odernn"}[config.train_space]
    params = model.parameters()
    result = TrainResult(model)
    if val_set:
        result.initial_val_mse = evaluate(model, val_set, eval_mode)
    best, best_params, stale = np.inf, params, 0
    for epoch in range(1, config.epochs + 1):
        sum_mse = sum_pen = 0.0
        count = 0
        for batch in batches:
            report, grads = loss_and_grad(model.with_parameters(params), batch, config)
            if not np.isfinite(report.total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(f"epoch {epoch}: loss {report.total} "
                                    f"(mse {report.mse}, penalty {report.penalty})")
            params = opt.step(params, grads)
            sum_mse += report.mse * batch.size
            sum_pen += report.penalty * batch.size
            count += batch.size
        current = model.with_parameters(params)
        val = evaluate(current, val_set, eval_mode) if val_set else sum_mse / count
        result.history.append(EpochMetrics(epoch, sum_mse / count, sum_pen / count, val, mode))
        if progress:
            progress(result.history[-1])
        log.debug("epoch %d train_mse %.6g val_mse %.6g", epoch, sum_mse / count, val)
        if val < best:
            best, best_params, stale = val, params, 0
            result.best_epoch = epoch
        else:
            stale += 1
            if config.patience and stale >= config.patience:
                break
    result.model = model.with_parameters(best_params)
    return result


def predict(model: OdeRnnModel, dataset: Sequence[Trajectory], space: str) -> list[np.ndarray]:
    """Per-trajectory predictions on their own grids."""
    out = [None] * len(dataset)
    positions: dict[bytes, list] = {}
    for i, tr in enumerate(dataset):
        positions.setdefault(tr.times.tobytes(), []).append(i)
    for idx in positions.values():
        batch = TrajectoryBatch.from_trajectories([dataset[i] for i in idx])
        res = compensated_output(model, batch, space=space)
        for j, i in enumerate(idx):
            out[i] = np.asarray(res.output)[j]
    return out


_MODE_SPACE = {"cssc": "output", "posthoc": "output", "hidden": "hidden",
               "odernn": "none", "prehoc": "none"}


def evaluate(model: OdeRnnModel | None, dataset: Sequence[Trajectory], mode: str) -> float:
    """Mean squared error over every grid point of every trajectory.

    ``mode`` picks the inference path; pairing it with a suitably trained
    model (e.g. ``posthoc`` with a plain ODE-RNN) is up to the caller.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}")
    if mode == "spline_baseline":
        preds = [sp.eval_compensation(sp.natural_spline(tr), tr.times) for tr in dataset]
    else:
        if model is None:
            raise ValueError(f"mode {mode!r} needs a model")
        preds = predict(model, dataset, _MODE_SPACE[mode])
    err = np.concatenate([(p - tr.values).ravel() for p, tr in zip(preds, dataset)])
    return float(np.mean(err ** 2))


def write_metrics_csv(path_or_file, history: Sequence[EpochMetrics]) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for m in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in m.row().items()})
    finally:
        if own:
            fh.close()
