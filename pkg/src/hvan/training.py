"""Focal-loss training, metrics and checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.stats import rankdata

from .core import View
from .network import HybridViewNet, ModelConfig, build

__all__ = [
    "TrainConfig",
    "MetricsReport",
    "Checkpoint",
    "focal_loss",
    "auc",
    "confusion_metrics",
    "stack_cases",
    "train",
    "evaluate",
    "predict_scores",
    "predict_logits",
    "report_from_counts",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

EPS = 1e-7


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 4
    focal_gamma: float = 2.0
    focal_alpha: float | None = None  # None: negative-class fraction of the training set
    threshold: float = 0.5
    seed: int = 0
    max_steps: int | None = None

    def validate(self) -> "TrainConfig":
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.focal_gamma < 0:
            raise ValueError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        if self.focal_alpha is not None and not 0 < self.focal_alpha < 1:
            raise ValueError(f"focal_alpha must lie in (0, 1), got {self.focal_alpha}")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def focal_loss(p, y, alpha=None, gamma=2.0):
    """Mean of -alpha_t (1 - p_t)^gamma log p_t.

    ``alpha`` weights the positive class and ``1 - alpha`` the negative one;
    ``alpha=None`` gives alpha_t = 1. Probabilities are clamped to
    [EPS, 1 - EPS].
    """
    p = torch.as_tensor(p)
    y = torch.as_tensor(y, dtype=p.dtype)
    p = p.clamp(EPS, 1 - EPS)
    p_t = torch.where(y > 0.5, p, 1 - p)
    loss = -((1 - p_t) ** gamma) * torch.log(p_t)
    if alpha is not None:
        loss = torch.where(y > 0.5, alpha, 1 - alpha) * loss
    return loss.mean()


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative (ties count half)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores vs {y.size} labels")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass
class MetricsReport:
    """Undefined ratios (zero denominator) are None rather than 0."""

    auc: float | None
    f1: float | None
    accuracy: float
    sensitivity: float | None
    specificity: float | None
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _ratio(num, den):
    return num / den if den else None


def confusion_metrics(probs, labels, threshold=0.5) -> MetricsReport:
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if p.size == 0:
        raise ValueError("no predictions")
    if p.shape != y.shape:
        raise ValueError(f"{p.size} probabilities vs {y.size} labels")
    pred = p >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return report_from_counts(tp, fp, tn, fn, auc(p, y) if 0 < y.sum() < y.size else None)


def report_from_counts(tp, fp, tn, fn, auc_value=None) -> MetricsReport:
    sens = _ratio(tp, tp + fn)
    prec = _ratio(tp, tp + fp)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    if sens is None or prec is None:
        f1 = None
    return MetricsReport(
        auc=auc_value,
        f1=f1,
        accuracy=(tp + tn) / (tp + tn + fp + fn),
        sensitivity=sens,
        specificity=_ratio(tn, tn + fp),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict
    epoch: int = 0
    step: int = 0
    rng_state: np.ndarray | None = None
    optimizer: dict | None = None
    train_config: TrainConfig | None = None
    history: list = field(default_factory=list)

    def model(self) -> HybridViewNet:
        m = HybridViewNet(self.config)
        m.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in self.parameters.items()})
        return m


def _state_to_numpy(model):
    return {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """One ``.npz`` archive: ``config.json`` and ``meta.json`` as strings,
    parameters under ``param/<name>``, Adam moments under ``optim/<i>/<key>``
    and the shuffling RNG state under ``rng_state``."""
    arrays = {
        "config.json": np.array(ckpt.config.to_json()),
        "meta.json": np.array(
            json.dumps(
                {
                    "epoch": ckpt.epoch,
                    "step": ckpt.step,
                    "train_config": None if ckpt.train_config is None else ckpt.train_config.to_dict(),
                    "history": ckpt.history,
                },
                sort_keys=True,
            )
        ),
    }
    for k, v in ckpt.parameters.items():
        arrays[f"param/{k}"] = v
    if ckpt.rng_state is not None:
        arrays["rng_state"] = np.asarray(ckpt.rng_state, dtype=np.uint8)
    if ckpt.optimizer is not None:
        for i, st in ckpt.optimizer.items():
            for key, val in st.items():
                arrays[f"optim/{i}/{key}"] = np.asarray(val)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        config = ModelConfig.from_dict(json.loads(str(z["config.json"])))
        meta = json.loads(str(z["meta.json"]))
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        rng_state = z["rng_state"] if "rng_state" in z.files else None
        optim = {}
        for k in z.files:
            if k.startswith("optim/"):
                _, i, key = k.split("/", 2)
                optim.setdefault(int(i), {})[key] = z[k]
    tc = meta.get("train_config")
    return Checkpoint(
        config=config,
        parameters=params,
        epoch=meta["epoch"],
        step=meta.get("step", 0),
        rng_state=rng_state,
        optimizer=optim or None,
        train_config=None if tc is None else TrainConfig.from_dict(tc),
        history=meta.get("history", []),
    )


def stack_cases(cases, config: ModelConfig):
    """Cases -> (v_t, v_s, labels) tensors; disabled views come back as None."""
    def stack(attr, view):
        if view not in config.views:
            return None
        vols = [getattr(c, attr) for c in cases]
        if any(v is None for v in vols):
            raise ValueError(f"{view.value} volume missing for a case")
        return torch.from_numpy(np.stack(vols)[:, None].astype(np.float32))

    labels = torch.tensor([c.label for c in cases], dtype=torch.float32)
    return stack("vol_t", View.TRANSVERSE), stack("vol_s", View.SAGITTAL), labels


def _take(t, idx):
    return None if t is None else t[idx]


def _optimizer_state(opt):
    out = {}
    for i, st in opt.state_dict()["state"].items():
        out[i] = {k: (v.numpy().copy() if torch.is_tensor(v) else np.asarray(v)) for k, v in st.items()}
    return out


def _load_optimizer_state(opt, saved):
    sd = opt.state_dict()
    sd["state"] = {
        int(i): {k: torch.from_numpy(np.array(v)) for k, v in st.items()} for i, st in saved.items()
    }
    for st in sd["state"].values():
        if "step" in st:
            st["step"] = st["step"].to(torch.float32).reshape(())
    opt.load_state_dict(sd)


@torch.no_grad()
def predict_logits(model: HybridViewNet, cases, batch_size=8) -> np.ndarray:
    model.eval()
    v_t, v_s, _ = stack_cases(cases, model.config)
    out = []
    for i in range(0, len(cases), batch_size):
        sl = slice(i, i + batch_size)
        out.append(model(_take(v_t, sl), _take(v_s, sl)).reshape(-1))
    return torch.cat(out).double().numpy()


def predict_scores(model: HybridViewNet, cases, batch_size=8) -> np.ndarray:
    """Positive-class probability per case."""
    return 1.0 / (1.0 + np.exp(-predict_logits(model, cases, batch_size)))


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    cases,
    val_cases=None,
    log_csv=None,
    resume: Checkpoint | None = None,
) -> Checkpoint:
    """Adam on the focal loss; returns the checkpoint at the end of the run.

    With ``resume``, parameters, optimizer moments and the shuffling RNG are
    restored and training continues from the saved epoch.
    """
    train_cfg.validate()
    model_cfg.validate()
    if not cases:
        raise ValueError("empty training set")
    labels_all = [c.label for c in cases]
    if len(set(labels_all)) < 2:
        raise ValueError("training set needs both classes")
    alpha = train_cfg.focal_alpha
    if alpha is None:
        alpha = labels_all.count(0) / len(labels_all)

    model = build(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    gen = torch.Generator().manual_seed(train_cfg.seed)
    start_epoch, step, history = 0, 0, []
    if resume is not None:
        model.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in resume.parameters.items()})
        if resume.optimizer:
            _load_optimizer_state(opt, resume.optimizer)
        if resume.rng_state is not None:
            gen.set_state(torch.from_numpy(np.array(resume.rng_state)))
        start_epoch, step, history = resume.epoch, resume.step, list(resume.history)

    v_t, v_s, y = stack_cases(cases, model_cfg)
    n = len(cases)
    for epoch in range(start_epoch, train_cfg.epochs):
        if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
            break
        model.train()
        order = torch.randperm(n, generator=gen)
        total, seen = 0.0, 0
        for i in range(0, n, train_cfg.batch_size):
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                break
            idx = order[i : i + train_cfg.batch_size]
            logits = model(_take(v_t, idx), _take(v_s, idx)).reshape(-1)
            loss = focal_loss(torch.sigmoid(logits), y[idx], alpha, train_cfg.focal_gamma)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch + 1}, step {step + 1}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            total += loss.item() * len(idx)
            seen += len(idx)
        row = {"epoch": epoch + 1, "loss": total / max(seen, 1), "val_auc": None}
        if val_cases:
            try:
                row["val_auc"] = auc(predict_scores(model, val_cases), [c.label for c in val_cases])
            except ValueError:
                pass
        history.append(row)
        log.info("epoch %d loss %.5f val_auc %s", row["epoch"], row["loss"], row["val_auc"])
        if log_csv is not None:
            _append_log(log_csv, row)
        if seen < n:  # stopped by max_steps inside the epoch
            break

    return Checkpoint(
        config=model_cfg,
        parameters=_state_to_numpy(model),
        epoch=history[-1]["epoch"] if history else start_epoch,
        step=step,
        rng_state=gen.get_state().numpy().copy(),
        optimizer=_optimizer_state(opt),
        train_config=train_cfg,
        history=history,
    )


def _append_log(path, row):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(["epoch", "loss", "val_auc"])
        w.writerow([row["epoch"], f"{row['loss']:.6g}", "" if row["val_auc"] is None else f"{row['val_auc']:.6g}"])


def evaluate(checkpoint, cases, threshold=0.5) -> MetricsReport:
    """Metrics of a checkpoint (or a model) on ``cases``."""
    model = checkpoint if isinstance(checkpoint, HybridViewNet) else checkpoint.model()
    scores = predict_scores(model, cases)
    return confusion_metrics(scores, [c.label for c in cases], threshold)
