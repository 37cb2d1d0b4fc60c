"""Run-level operations behind the command line: one call per subcommand."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cam import cam
from .core import View
from .data import DataError, SynthParams, load_split, read_manifest, load_case, save_volume, synth_generate
from .network import ABLATION_GRID, ModelConfig
from .training import (
    Checkpoint,
    MetricsReport,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "RunConfig",
    "METRIC_NAMES",
    "ABLATION_FIELDS",
    "synth_data",
    "train_run",
    "eval_run",
    "ablate_run",
    "cam_run",
    "read_checkpoint",
]

log = logging.getLogger(__name__)

METRIC_NAMES = ("auc", "f1", "accuracy", "sensitivity", "specificity")
ABLATION_FIELDS = ("transverse", "sagittal", "iva", "cva", "hvaf") + METRIC_NAMES


def _synth_from_dict(d):
    known = {f.name for f in dataclasses.fields(SynthParams)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown synth keys {sorted(unknown)}")
    return SynthParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class RunConfig:
    """Everything a run depends on.

    JSON schema: ``{"model": {ModelConfig fields}, "train": {TrainConfig
    fields}, "synth": {SynthParams fields}}``; each section and each key is
    optional and falls back to the defaults.
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthParams = field(default_factory=SynthParams)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"model", "train", "synth"}
        if unknown:
            raise ValueError(f"unknown config sections {sorted(unknown)}")
        return cls(
            model=ModelConfig.from_dict(d.get("model", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            synth=_synth_from_dict(d.get("synth", {})),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ValueError(f"config file {path} not found") from e
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(d)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(
            self, model=dataclasses.replace(self.model, seed=seed), train=dataclasses.replace(self.train, seed=seed)
        )

    def with_size(self, size) -> "RunConfig":
        return dataclasses.replace(self, model=dataclasses.replace(self.model, input_size=tuple(size)))

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        return self

    def to_dict(self):
        return {"model": self.model.to_dict(), "train": self.train.to_dict(), "synth": dataclasses.asdict(self.synth)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


def synth_data(run: RunConfig, out_dir, n_cases: int, size: int, seed: int):
    return synth_generate(n_cases, size, seed, out_dir, params=run.synth)


def _load(manifest, split, model_cfg: ModelConfig):
    cases = load_split(manifest, split, model_cfg.input_size, model_cfg.views)
    if not cases:
        raise DataError(f"manifest {manifest} has no {split!r} cases")
    return cases


def read_checkpoint(path) -> Checkpoint:
    try:
        return load_checkpoint(path)
    except FileNotFoundError as e:
        raise DataError(f"checkpoint {path} not found") from e
    except (OSError, KeyError, ValueError) as e:
        raise DataError(f"checkpoint {path} is unreadable: {e}") from e


def _write_metrics(path, report: MetricsReport, extra=None):
    d = report.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, sort_keys=True, indent=2) + "\n")


def train_run(run: RunConfig, manifest, out_dir, resume=None) -> tuple[Checkpoint, MetricsReport | None]:
    """Train on the train split, evaluate on the test split (if any).

    Writes ``checkpoint.npz``, ``train_log.csv``, ``metrics.json`` and the
    resolved ``config.json`` into ``out_dir``.
    """
    run.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_cases = _load(manifest, "train", run.model)
    test_cases = load_split(manifest, "test", run.model.input_size, run.model.views)
    resume_ckpt = read_checkpoint(resume) if resume else None
    if resume_ckpt is not None and resume_ckpt.config != run.model:
        raise ValueError("resume checkpoint was trained with a different model config")
    (out / "config.json").write_text(run.to_json() + "\n")
    log_csv = out / "train_log.csv"
    if resume_ckpt is None and log_csv.exists():
        log_csv.unlink()
    ckpt = train(run.model, run.train, train_cases, test_cases or None, log_csv, resume_ckpt)
    save_checkpoint(ckpt, out / "checkpoint.npz")
    report = None
    if test_cases:
        report = evaluate(ckpt, test_cases, run.train.threshold)
        _write_metrics(out / "metrics.json", report, {"digest": run.digest(), "split": "test"})
    return ckpt, report


def eval_run(checkpoint, manifest, split="test", threshold=None, out=None) -> MetricsReport:
    ckpt = read_checkpoint(checkpoint)
    if threshold is None:
        threshold = ckpt.train_config.threshold if ckpt.train_config else 0.5
    report = evaluate(ckpt, _load(manifest, split, ckpt.config), threshold)
    if out is not None:
        _write_metrics(out, report, {"split": split})
    return report


def ablate_run(run: RunConfig, manifest, out_csv) -> list[dict]:
    """Train and test every row of the ablation grid; one combined CSV."""
    run.validate()
    base = run.model
    rows = []
    cache = {}
    for t, s, iva, cva, hvaf in ABLATION_GRID:
        cfg = dataclasses.replace(base, use_transverse=t, use_sagittal=s, use_iva=iva, use_cva=cva, use_hvaf=hvaf)
        views = tuple(cfg.views)
        if views not in cache:
            cache[views] = (_load(manifest, "train", cfg), _load(manifest, "test", cfg))
        tr, te = cache[views]
        log.info("ablation row t=%d s=%d iva=%d cva=%d hvaf=%d", t, s, iva, cva, hvaf)
        report = evaluate(train(cfg, run.train, tr), te, run.train.threshold)
        row = dict(zip(ABLATION_FIELDS[:5], (int(t), int(s), int(iva), int(cva), int(hvaf))))
        row.update({k: getattr(report, k) for k in METRIC_NAMES})
        rows.append(row)
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, ABLATION_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: "" if v is None else v for k, v in row.items()})
    return rows


def cam_run(checkpoint, manifest, case_id, out_dir, stage=4) -> dict[View, Path]:
    """Heatmaps of one manifest case, written as ``<id>_cam_<view>.raw``."""
    ckpt = read_checkpoint(checkpoint)
    cfg = ckpt.config
    rows = [r for r in read_manifest(manifest) if r.id == case_id]
    if not rows:
        raise DataError(f"case {case_id!r} not in {manifest}")
    case = load_case(rows[0], Path(manifest).parent, cfg.input_size, cfg.views)
    maps = cam(ckpt.model(), case.vol_t, case.vol_s, stage)
    out = Path(out_dir)
    paths = {}
    for view, m in maps.items():
        p = out / f"{case_id}_cam_{view.value}.raw"
        save_volume(p, m.astype(np.float32), view)
        paths[view] = p
    return paths
