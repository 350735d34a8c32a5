"""Mini-batch Adam training on the mean-squared flow-map loss."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, Rng
from .data import Dataset, minibatches
from .net import AdamState, Network, adam_update, backward

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 30
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.0
    log_every: int = 0
    keep_batch_losses: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    val_loss: list | None = None
    wall_time: float = 0.0
    final_loss: float = float("nan")
    batch_losses: list | None = None

    def history_rows(self):
        for e, loss in enumerate(self.loss, start=1):
            if self.val_loss is None:
                yield (e, loss)
            else:
                yield (e, loss, self.val_loss[e - 1])


def _split(ds: Dataset, net: Network):
    if ds.d != net.spec.d or ds.l != net.spec.l:
        raise DimensionError(
            f"dimension mismatch: dataset has d={ds.d}, l={ds.l}; network expects d={net.spec.d}, l={net.spec.l}"
        )
    y = ds.inputs()
    return y, ds.x_out


def _mse_rows(net: Network, y: np.ndarray, target: np.ndarray) -> float:
    r = y[:, : net.spec.d] + net.net_forward(y) - target
    return float(np.mean(np.sum(r * r, axis=1)))


def mse_loss(net: Network, batch: Dataset) -> float:
    """``(1/B) sum_b ||x_out(z1_b) - z2_b||^2`` over the pairs in ``batch``."""
    if batch.J == 0:
        raise ValueError("mse_loss needs a non-empty batch")
    y, target = _split(batch, net)
    return _mse_rows(net, y, target)


def train(net: Network, ds: Dataset, cfg: TrainConfig, in_place: bool = False):
    """Train ``net`` on ``ds``; returns ``(trained_net, report)``.

    Every epoch draws a fresh permutation from the ``"shuffle"`` substream of
    ``cfg.seed``. Reported epoch losses are means of the batch losses seen
    before each update.
    """
    if not in_place:
        net = net.copy()
    y_all, t_all = _split(ds, net)
    rng = Rng(cfg.seed)
    n_val = int(round(cfg.validation_fraction * ds.J))
    if n_val:
        perm = rng.substream("validation").permutation(ds.J)
        val_idx, tr_idx = perm[:n_val], perm[n_val:]
        y_val, t_val = y_all[val_idx], t_all[val_idx]
        y_tr, t_tr = y_all[tr_idx], t_all[tr_idx]
    else:
        y_tr, t_tr = y_all, t_all
    if y_tr.shape[0] == 0:
        raise ValueError("no training pairs left after the validation split")

    adam = AdamState.for_network(net, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    shuffle = rng.substream("shuffle")
    report = TrainReport(val_loss=[] if n_val else None,
                         batch_losses=[] if cfg.keep_batch_losses else None)
    d = net.spec.d
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        batches = minibatches(y_tr.shape[0], cfg.batch_size, shuffle)
        losses = np.empty(len(batches))
        for b, idx in enumerate(batches):
            y, target = y_tr[idx], t_tr[idx]
            nhat, cache = net.net_forward(y, keep=True)
            r = y[:, :d] + nhat - target
            loss = float(np.mean(np.sum(r * r, axis=1)))
            if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise TrainingDiverged(f"loss {loss:g} at epoch {epoch}, batch {b}")
            losses[b] = loss
            adam_update(net, adam, backward(net, cache, r))
        report.loss.append(float(losses.mean()))
        if report.batch_losses is not None:
            report.batch_losses.append(losses)
        if n_val:
            report.val_loss.append(_mse_rows(net, y_val, t_val))
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("epoch %d loss %.3e", epoch, report.loss[-1])
    report.wall_time = time.perf_counter() - start
    report.final_loss = _mse_rows(net, y_tr, t_tr)
    return net, report


def write_history(report: TrainReport, path) -> None:
    header = "epoch,loss" + (",val_loss" if report.val_loss is not None else "")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in report.history_rows():
            fh.write(",".join([str(row[0])] + [f"{v:.17g}" for v in row[1:]]) + "\n")
