"""Joint training of the backbone with the learnable window length and cutoff,
plus the grid-search and fixed-value baselines."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, SyntheticTaskSpec, generate_dataset
from .efficiency import EnergyReport, PenaltyState, energy_report, epoch_update, penalty
from .frontend import MIN_M, DownsampleSpec, WindowSpec, frontend_forward
from .model import Backbone, backbone_desc
from .tensor import Parameter, Tape, Tensor, add, backward, nll_loss, no_grad, sgd_step

__all__ = [
    "TrainConfig", "TrainedModel", "EpochRow", "RunLog", "DivergenceError",
    "train", "evaluate", "grid_search", "GridResult", "fixed_values", "default_grid", "CSV_HEADER",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("epoch", "m_samples", "m_ms", "s_bins", "s_hz", "train_loss",
              "test_acc", "penalty", "mac_ratio")
BASELINES = ("none", "grid", "fixed")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite training loss ({value}) in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    family: str = "hamming"
    mask_mode: str = "hard"
    init_m: Optional[float] = None  # None: the full support, task.n
    init_s: Optional[float] = None  # None: ramp ends on the Nyquist bin
    r: float = 128.0
    lam: float = 0.5
    lr_theta: float = 0.02
    lr_ms: float = 1e5
    momentum: float = 0.9
    epochs: int = 11
    warmup_epochs: int = 3
    batch_size: int = 32
    seed: int = 0
    baseline: str = "none"
    eval_group: int = 10
    crop: bool = True

    def __post_init__(self):
        if self.mask_mode not in ("soft", "hard"):
            raise ValueError(f"mask_mode must be 'soft' or 'hard', got {self.mask_mode!r}")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}, got {self.baseline!r}")
        if self.lr_theta <= 0 or self.lr_ms < 0 or self.lam < 0:
            raise ValueError("learning rates and lambda must be non-negative (lr_theta > 0)")
        if self.epochs < 1 or self.batch_size < 1 or self.eval_group < 1:
            raise ValueError("epochs, batch_size and eval_group must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    def resolve(self, task: SyntheticTaskSpec) -> "TrainConfig":
        """Fill task-dependent defaults and apply baseline overrides."""
        cfg = self
        if cfg.init_m is None:
            cfg = replace(cfg, init_m=float(task.n))
        if cfg.init_s is None:
            cfg = replace(cfg, init_s=float(task.n_bins - 1 - cfg.r))
        if cfg.baseline != "none":
            cfg = replace(cfg, lr_ms=0.0, lam=0.0)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    backbone: Backbone
    m: Parameter
    s: Parameter
    wspec: WindowSpec
    dspec: DownsampleSpec
    mask_mode: str

    def specs(self):
        return (replace(self.wspec, m=self.m.tensor.item()),
                replace(self.dspec, s=self.s.tensor.item()))

    def front(self, x: np.ndarray, batch: int = 100):
        """Front-end output for ``x`` at the current ``(m, s)``, without gradients."""
        wspec, dspec = self.specs()
        out, valid = [], None
        with no_grad():
            for i in range(0, len(x), batch):
                y, valid = frontend_forward(Tensor(x[i : i + batch]), wspec, dspec,
                                            "train", self.mask_mode)
                out.append(y.data)
        return np.concatenate(out, axis=0), valid

    def log_likelihood(self, x: np.ndarray, batch: int = 100, front=None) -> np.ndarray:
        y, valid = front if front is not None else self.front(x, batch)
        with no_grad():
            out = [self.backbone(Tensor(y[i : i + batch]), valid).data for i in range(0, len(y), batch)]
        return np.concatenate(out, axis=0)


@dataclass
class EpochRow:
    epoch: int
    m_samples: float
    m_ms: float
    s_bins: float
    s_hz: float
    train_loss: float
    test_acc: float
    penalty: float
    mac_ratio: float


@dataclass
class RunLog:
    rows: list
    report: EnergyReport
    final_m: float
    final_s: float
    test_acc: float
    aggregate_acc: float
    config: dict
    task: dict
    model: Optional[TrainedModel] = field(default=None, repr=False)

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([repr(v) for v in (getattr(row, h) for h in CSV_HEADER)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "final_m_samples": self.final_m,
            "final_s_bins": self.final_s,
            "test_acc": self.test_acc,
            "aggregate_acc": self.aggregate_acc,
            "epochs": len(self.rows),
            "energy": self.report.to_dict(),
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "runlog.csv").write_text(self.csv_text())
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------


def _group_indices(labels: np.ndarray, group: int) -> list:
    groups = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        groups += [idx[i : i + group] for i in range(0, len(idx), group)]
    return groups


def score(logp: np.ndarray, labels: np.ndarray, level: str = "window", group: int = 10):
    """(accuracy, error rate) from per-window log-likelihoods.

    ``aggregate`` sums log-likelihoods over groups of ``group`` windows that
    share a label before taking the argmax.
    """
    labels = np.asarray(labels)
    if level == "window":
        acc = float(np.mean(np.argmax(logp, axis=1) == labels))
    elif level == "aggregate":
        groups = _group_indices(labels, group)
        hits = [np.argmax(logp[g].sum(axis=0)) == labels[g[0]] for g in groups]
        acc = float(np.mean(hits))
    else:
        raise ValueError(f"level must be 'window' or 'aggregate', got {level!r}")
    return acc, 1.0 - acc


def evaluate(model: TrainedModel, x: np.ndarray, y: np.ndarray, level: str = "window",
             group: int = 10):
    return score(model.log_likelihood(x), y, level, group)


def _as_dataset(task) -> Dataset:
    return task if isinstance(task, Dataset) else generate_dataset(task)


def train(config: TrainConfig, task) -> RunLog:
    """Train backbone, ``m`` and ``s`` jointly; ``task`` is a spec or a generated Dataset."""
    data = _as_dataset(task)
    spec = data.spec
    cfg = config.resolve(spec)
    rng = np.random.default_rng(cfg.seed)
    backbone = Backbone(backbone_desc(spec.num_classes), rng)
    n_bins = spec.n_bins
    m = Parameter("m", Tensor(cfg.init_m), bounds=(MIN_M, float(spec.n)))
    s = Parameter("s", Tensor(cfg.init_s), bounds=(cfg.r + 1, float(n_bins)))
    wspec = WindowSpec(cfg.family, m.tensor.item(), spec.n)
    dspec = DownsampleSpec(s.tensor.item(), cfg.r, n_bins, spec.rate_in)
    model = TrainedModel(backbone, m, s, wspec, dspec, cfg.mask_mode)
    reference = (cfg.init_m, cfg.init_s)
    state = PenaltyState.initial(cfg.lam, cfg.init_m, cfg.init_s)
    learn_ms = cfg.lr_ms > 0
    # with (m, s) frozen the front-end is a fixed transform: run it once
    frozen_train = None if learn_ms else model.front(data.x_train)
    frozen_test = None if learn_ms else model.front(data.x_test)

    rows = []
    n_train = len(data.y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_train)
        loss_sum = pen_sum = 0.0
        n_batches = 0
        for b in range(0, n_train, cfg.batch_size):
            idx = order[b : b + cfg.batch_size]
            wspec, dspec = model.specs()
            with Tape():
                if frozen_train is None:
                    y, valid = frontend_forward(Tensor(data.x_train[idx]), wspec, dspec, "train",
                                                cfg.mask_mode, m=m.tensor, s=s.tensor)
                else:
                    y, valid = Tensor(frozen_train[0][idx]), frozen_train[1]
                loss = nll_loss(backbone(y, valid, crop=cfg.crop), data.y_train[idx])
                if not math.isfinite(loss.item()):
                    raise DivergenceError(epoch, loss.item())
                j = penalty(m.tensor, s.tensor, state, loss)
                backward(add(loss, j))
            sgd_step(backbone.params, cfg.lr_theta, cfg.momentum)
            if learn_ms and epoch > cfg.warmup_epochs:
                sgd_step([m, s], cfg.lr_ms, cfg.momentum)
            else:
                m.tensor.grad = s.tensor.grad = None
            if not (math.isfinite(m.tensor.item()) and math.isfinite(s.tensor.item())):
                raise DivergenceError(epoch, float("nan"))
            state.accumulate(m.tensor.item(), s.tensor.item())
            loss_sum += loss.item()
            pen_sum += j.item()
            n_batches += 1
        mean_m, mean_s = state.sum_m / state.count, state.sum_s / state.count
        epoch_update(state)
        acc, _ = score(model.log_likelihood(data.x_test, front=frozen_test), data.y_test)
        epoch_report = energy_report(replace(wspec, m=mean_m), replace(dspec, s=mean_s),
                                     backbone.desc, reference)
        rows.append(EpochRow(
            epoch=epoch, m_samples=mean_m, m_ms=mean_m / spec.rate_in * 1000.0,
            s_bins=mean_s, s_hz=dspec.bins_to_hz(mean_s), train_loss=loss_sum / n_batches,
            test_acc=acc, penalty=pen_sum / n_batches,
            mac_ratio=epoch_report.mac_ratio_vs_reference,
        ))
        log.info("epoch %d: m=%.1f s=%.1f loss=%.4f acc=%.3f", epoch, mean_m, mean_s,
                 loss_sum / n_batches, acc)

    wspec, dspec = model.specs()
    logp = model.log_likelihood(data.x_test, front=frozen_test)
    acc, _ = score(logp, data.y_test, "window")
    agg, _ = score(logp, data.y_test, "aggregate", cfg.eval_group)
    return RunLog(
        rows=rows,
        report=energy_report(wspec, dspec, backbone.desc, reference),
        final_m=m.tensor.item(), final_s=s.tensor.item(),
        test_acc=acc, aggregate_acc=agg,
        config=cfg.to_dict(), task=spec.to_dict(), model=model,
    )


def fixed_values(config: TrainConfig, task, m: float, s: float) -> RunLog:
    """Train with ``(m, s)`` frozen at the given values."""
    return train(replace(config, init_m=float(m), init_s=float(s), baseline="fixed"), task)


# ---------------------------------------------------------------------------


@dataclass
class GridResult:
    best: tuple
    table: list

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("m", "s", "accuracy", "mac_ratio"))
        for row in self.table:
            writer.writerow([repr(row[k]) for k in ("m", "s", "accuracy", "mac_ratio")])
        return buf.getvalue()


def _grid_point(args):
    config, data, m, s, reference = args
    run = train(replace(config, init_m=float(m), init_s=float(s), baseline="grid"), data)
    wspec, dspec = run.model.specs()
    rep = energy_report(wspec, dspec, run.model.backbone.desc, reference)
    return {"m": float(m), "s": float(s), "accuracy": run.test_acc,
            "mac_ratio": rep.mac_ratio_vs_reference, "macs": rep.macs}


def grid_search(config: TrainConfig, task, m_grid, s_grid, jobs: int = 1) -> GridResult:
    """Train one frozen-(m, s) model per grid point; best = highest accuracy.

    Ties go to the smaller ``m * s``.  MAC ratios are relative to the
    config's own ``(init_m, init_s)``.  Rows come back in grid order.
    """
    m_grid, s_grid = list(m_grid), list(s_grid)
    if not m_grid or not s_grid:
        raise ValueError("grid_search needs non-empty m and s grids")
    data = _as_dataset(task)
    base = config.resolve(data.spec)
    reference = (base.init_m, base.init_s)
    jobs_args = [(config, data, m, s, reference) for m in m_grid for s in s_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            table = list(pool.map(_grid_point, jobs_args))
    else:
        table = [_grid_point(a) for a in jobs_args]
    best = min(table, key=lambda r: (-r["accuracy"], r["m"] * r["s"]))
    return GridResult(best=(best["m"], best["s"]), table=table)


def default_grid(task: SyntheticTaskSpec, config: TrainConfig):
    """Ten evenly spaced window lengths and cutoffs, each from a tenth of full size up to full size."""
    cfg = config.resolve(task)
    m_grid = np.linspace(task.n / 10, task.n, 10)
    s_grid = np.linspace(max(task.n_bins / 10, cfg.r + 1), task.n_bins, 10)
    return [float(v) for v in m_grid], [float(v) for v in s_grid]
