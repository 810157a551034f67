"""Full-batch gradient training of a Shell.

Each epoch performs one forward/backward pass and one optimizer step. The
loss logged for epoch ``e`` is measured after ``e`` steps, so epoch 0 is the
initial loss and the last entry is the loss of the returned parameters.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DomainError
from .system import validate_flow

log = logging.getLogger(__name__)


@dataclass
class DatasetItem:
    input: object = "impulse"
    target: object = 1.0


class Dataset:
    """(input, target) pairs; ``"impulse"`` inputs excite every input
    channel once, giving the full response matrix."""

    def __init__(self, items):
        self.items = [it if isinstance(it, DatasetItem) else DatasetItem(*it) for it in items]
        if not self.items:
            raise ConfigurationError("dataset is empty")

    @classmethod
    def impulse(cls, target=1.0) -> Dataset:
        return cls([DatasetItem("impulse", target)])

    def __len__(self):
        return len(self.items)

    def batch(self, shell):
        xs, targets = [], []
        for it in self.items:
            if isinstance(it.input, str):
                if it.input != "impulse":
                    raise ConfigurationError(f"unknown input spec {it.input!r}")
                x = shell.impulse(None)
            else:
                x = np.asarray(it.input)
                if x.ndim == 2:
                    x = x[None]
            xs.append(x)
            targets.append(it.target)
        return np.concatenate(xs, axis=0), targets[0] if len(targets) == 1 else targets


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    optimizer: str = "adam"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 10
    patience: int | None = None

    def __post_init__(self):
        if self.epochs < 0 or int(self.epochs) != self.epochs:
            raise ConfigurationError("epochs must be a non-negative integer")
        if not self.lr > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.log_every < 1:
            raise ConfigurationError("log_every must be at least 1")


@dataclass
class LossTerm:
    """``fn(output, target, tape)`` returns a real scalar Var."""

    name: str
    fn: Callable
    weight: float = 1.0


def loss_spectral_flatness(mag) -> ad.Var:
    """Mean squared deviation of magnitudes from 1."""
    mag = ad.as_var(mag)
    if not np.all(np.isfinite(mag.value)):
        raise DomainError("magnitudes must be finite")
    return ad.mean(ad.abs2(mag - 1.0))


def loss_temporal_sparsity(*vectors) -> ad.Var:
    """Penalty ``1 - |v|_1 / (sqrt(N) |v|_2)`` summed over gain vectors.

    Zero when all entries share one magnitude, ``1 - 1/sqrt(N)`` for a
    one-hot vector; spreading energy evenly over the delay lines makes
    reflections build up faster.
    """
    total = None
    for v in vectors:
        v = ad.as_var(v)
        n = v.value.size
        l2 = float(np.sqrt(np.sum(v.value ** 2)))
        if l2 == 0:
            raise DomainError("gain vector is all zeros")
        flat = ad.reshape(v, (n,))
        ratio = ad.sum(ad.magnitude(flat)) / (ad.sqrt(ad.sum(ad.abs2(flat))) * math.sqrt(n))
        term = 1.0 - ratio
        total = term if total is None else total + term
    return total


class Adam:
    def __init__(self, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, modules, grads):
        self.t += 1
        for mod, g in zip(modules, grads):
            m = self.m.get(mod, np.zeros_like(g)) * self.b1 + (1 - self.b1) * g
            v = self.v.get(mod, np.zeros_like(g)) * self.b2 + (1 - self.b2) * g * g
            self.m[mod], self.v[mod] = m, v
            m_hat = m / (1 - self.b1 ** self.t)
            v_hat = v / (1 - self.b2 ** self.t)
            mod.raw = mod.raw - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, modules, grads):
        for mod, g in zip(modules, grads):
            mod.raw = mod.raw - self.lr * g


@dataclass
class TrainReport:
    history: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""

    @property
    def losses(self) -> np.ndarray:
        return np.array([h["total"] for h in self.history])

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"


def trainable_modules(shell):
    seen = []
    for m in shell.modules():
        if m.requires_grad and all(m is not s for s in seen):
            seen.append(m)
    return seen


def snapshot_modules(shell) -> list:
    seen = []
    out = []
    for m in shell.modules():
        if all(m is not s for s in seen):
            seen.append(m)
            out.append(m.snapshot())
    return out


def load_checkpoint(shell, checkpoint):
    """Restore module parameters from a checkpoint dict, file path, or list of snapshots."""
    if isinstance(checkpoint, (str, Path)):
        checkpoint = json.loads(Path(checkpoint).read_text())
    snaps = checkpoint["modules"] if isinstance(checkpoint, dict) else checkpoint
    by_name = {s["module-name"]: s for s in snaps}
    for m in shell.modules():
        if m.name in by_name:
            m.load_snapshot(by_name[m.name])


def evaluate_loss(shell, x, target, losses, tape=None):
    out = shell.forward(x, tape)
    terms = {}
    total = None
    for term in losses:
        value = term.fn(out, target, tape)
        terms[term.name] = value
        weighted = value * term.weight
        total = weighted if total is None else total + weighted
    return out, total, terms


def train(shell, dataset: Dataset, config: TrainConfig, losses, out_dir=None) -> TrainReport:
    """Optimize every trainable module of ``shell``.

    With ``out_dir`` set, parameter snapshots go to ``out_dir/run/<epoch>.json``
    (epoch 0, every ``log_every`` epochs and the last epoch) and per-epoch
    losses to ``out_dir/metrics.csv``. A non-finite loss stops training and
    restores the last parameters with a finite loss.
    """
    findings = validate_flow(shell)
    if findings:
        raise ConfigurationError("; ".join(findings))
    if not isinstance(dataset, Dataset) or len(dataset) == 0:
        raise ConfigurationError("training needs a non-empty Dataset")
    if not losses:
        raise ConfigurationError("no loss terms given")
    modules = trainable_modules(shell)
    if not modules:
        raise ConfigurationError("no module has requires_grad set")

    x, target = dataset.batch(shell)
    if config.optimizer == "adam":
        opt = Adam(config.lr, config.betas, config.eps)
    else:
        opt = SGD(config.lr)
    report = TrainReport()
    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / "run"
        run_dir.mkdir(parents=True, exist_ok=True)

    def measure(epoch):
        tape = ad.Tape()
        out, total, terms = evaluate_loss(shell, x, target, losses, tape)
        value = float(total.value)
        row = {"epoch": epoch, "total": value, **{k: float(v.value) for k, v in terms.items()}}
        if not math.isfinite(value):
            bad = np.argwhere(~np.isfinite(out.value))
            where = f" (first non-finite output at index {tuple(bad[0])})" if len(bad) else ""
            return row, None, f"non-finite loss at epoch {epoch}{where}"
        grads = tape.backward(total)
        by_module = [grads.get(tape._params.get(m), np.zeros_like(m.raw)) for m in modules]
        return row, by_module, ""

    def checkpoint(epoch, row):
        snaps = snapshot_modules(shell)
        report.snapshots[epoch] = snaps
        if run_dir is not None:
            doc = {"epoch": epoch, "total": row["total"], "modules": snaps}
            (run_dir / f"{epoch}.json").write_text(json.dumps(doc, indent=1))

    row, grads, msg = measure(0)
    if grads is None:
        raise DomainError(msg)
    report.history.append(row)
    checkpoint(0, row)
    best, since_best = row["total"], 0

    for epoch in range(1, config.epochs + 1):
        saved = [m.raw.copy() for m in modules]
        opt.step(modules, grads)
        row, new_grads, msg = measure(epoch)
        if new_grads is None:
            for m, raw in zip(modules, saved):
                m.raw = raw
            report.status, report.message = "aborted", msg
            log.error("training aborted: %s", msg)
            break
        grads = new_grads
        report.history.append(row)
        if epoch % config.log_every == 0 or epoch == config.epochs:
            checkpoint(epoch, row)
            log.info("epoch %d total %.6g", epoch, row["total"])
        if row["total"] < best:
            best, since_best = row["total"], 0
        else:
            since_best += 1
        if config.patience is not None and since_best >= config.patience:
            report.status, report.message = "early-stopped", f"no improvement for {since_best} epochs"
            if epoch not in report.snapshots:
                checkpoint(epoch, row)
            break

    if out_dir is not None:
        write_metrics_csv(Path(out_dir) / "metrics.csv", report.history, [t.name for t in losses])
    return report


def write_metrics_csv(path, history, term_names):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "total", *term_names])
        for row in history:
            writer.writerow([row["epoch"], repr(row["total"]), *(repr(row[n]) for n in term_names)])
