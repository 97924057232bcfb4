"""Training and evaluation loops with per-batch gradient instrumentation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import eigen_ratio
from .exceptions import ConfigError, DegenerateInputError, DivergenceError
from .model import MODES, RECOMBINE, backward, forward, grad_norms, init_params, loss, save_params
from .data import iter_batches
from .tensor_core import make_rng

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "batch", "loss", "test_acc", "grad_cls", "grad_input", "grad_clf", "eig_ratio"]
EVAL_EVERY = 10
EVAL_WINDOW = 500


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 4
    mode: str = "modulation"
    d: int = 64
    seed: int = 0
    max_len: int = 64
    optimizer: str = "sgd"
    max_batches: int | None = None
    eval_every: int = EVAL_EVERY
    eval_window: int = EVAL_WINDOW
    track_eig_ratio: bool = True
    recombine: str = "real"
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if not self.lr >= 0 or not math.isfinite(self.lr):
            raise ConfigError(f"lr must be a finite non-negative number, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.max_len < 2:
            raise ConfigError("max_len must be >= 2")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if self.recombine not in RECOMBINE:
            raise ConfigError(f"recombine must be one of {RECOMBINE}")
        if self.max_batches is not None and self.max_batches < 1:
            raise ConfigError("max_batches must be >= 1")


@dataclass
class MetricsRow:
    epoch: int
    batch: int
    loss: float
    test_acc: float | None
    grad_cls: float
    grad_input: float
    grad_clf: float
    eig_ratio: float | None = None

    def as_csv_row(self):
        def fmt(x):
            return "" if x is None else repr(float(x))

        return [str(self.epoch), str(self.batch), fmt(self.loss), fmt(self.test_acc),
                fmt(self.grad_cls), fmt(self.grad_input), fmt(self.grad_clf), fmt(self.eig_ratio)]


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for name, value in params.items():
            value -= self.lr * getattr(grads, name)


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        for name, value in params.items():
            g = getattr(grads, name)
            m = self.m.setdefault(name, np.zeros_like(value))
            v = self.v.setdefault(name, np.zeros_like(value))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


OPTIMIZERS = {"sgd": SGD, "adam": Adam}


def sgd_step(params, grads, lr):
    """In-place ``p <- p - lr * grad`` for every parameter."""
    SGD(lr).step(params, grads)
    return params


def evaluate(params, dataset, mode="modulation", batch_size=256, max_len=None, recombine_rule="real"):
    """Argmax accuracy over ``dataset``."""
    if len(dataset) == 0:
        raise DegenerateInputError("cannot evaluate on an empty dataset")
    correct = 0
    for ids, mask, labels in iter_batches(dataset, batch_size, shuffle=False, max_len=max_len):
        logits = forward(params, ids, mode, mask, recombine_rule).logits
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
    return correct / len(dataset)


def train(config, dataset, test_set=None, params=None, callback=None):
    """Train on ``dataset``; returns ``(params, rows)``.

    Runs ``config.epochs`` epochs, or exactly ``config.max_batches`` batches
    when that is set (cycling through as many epochs as needed). Test
    accuracy is recorded every ``eval_every`` batches within the first
    ``eval_window`` batches and at the final batch. Gradient norms (and the
    ``[CLS]`` eigenvalue ratio when enabled) are logged for every batch.
    """
    rng = make_rng(config.seed)
    if params is None:
        params = init_params(dataset.vocab_size, config.d, dataset.num_classes, rng)
    optimizer = OPTIMIZERS[config.optimizer](config.lr)
    rows = []
    step = 0
    done = False
    epoch = 0
    while not done and (epoch < config.epochs or config.max_batches is not None):
        epoch += 1
        for ids, mask, labels in iter_batches(dataset, config.batch_size, rng, max_len=config.max_len):
            step += 1
            trace = forward(params, ids, config.mode, mask, config.recombine)
            batch_loss = loss(trace, labels)
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"loss became {batch_loss} at epoch {epoch}, batch {step}")
            bundle = backward(params, trace, labels)
            norms = grad_norms(bundle)
            ratio = None
            if config.track_eig_ratio and trace.cls_output.shape[0] >= 2:
                try:
                    ratio = eigen_ratio(trace.cls_output)
                except DegenerateInputError:
                    ratio = None
            optimizer.step(params, bundle.params)

            last = config.max_batches is not None and step >= config.max_batches
            test_acc = None
            if test_set is not None and len(test_set) and (
                (step % config.eval_every == 0 and step <= config.eval_window) or last
            ):
                test_acc = evaluate(params, test_set, config.mode, max_len=config.max_len,
                                    recombine_rule=config.recombine)
            row = MetricsRow(epoch, step, batch_loss, test_acc, norms.cls, norms.input, norms.clf, ratio)
            rows.append(row)
            if callback is not None:
                callback(row)
            if test_acc is not None:
                log.info("epoch %d batch %d loss %.4f test_acc %.4f", epoch, step, batch_loss, test_acc)
            if last:
                done = True
                break
        if config.checkpoint_dir is not None:
            out = Path(config.checkpoint_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_params(params, out / f"checkpoint_epoch{epoch}.json")
    return params, rows


def write_metrics_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(row.as_csv_row())


def read_metrics_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            def opt(key):
                return float(rec[key]) if rec.get(key) not in (None, "") else None

            rows.append(MetricsRow(int(rec["epoch"]), int(rec["batch"]), float(rec["loss"]), opt("test_acc"),
                                   float(rec["grad_cls"]), float(rec["grad_input"]), float(rec["grad_clf"]),
                                   opt("eig_ratio")))
    return rows
