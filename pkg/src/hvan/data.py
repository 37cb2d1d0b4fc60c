"""Volume files, manifests, resizing and the synthetic dual-view phantom.

On disk a volume is raw little-endian float32 in C order (D fastest) next to
a JSON sidecar::

    {"format": "hvan-volume-v1", "shape": [H, W, D],
     "view": "transverse" | "sagittal", "spacing": [1.0, 1.0, 1.0]}

A manifest is a CSV with header ``id,path_t,path_s,label,split``; paths are
relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from .core import View

__all__ = [
    "FORMAT_TAG",
    "CasePair",
    "ManifestRow",
    "DataError",
    "save_volume",
    "read_volume",
    "normalize",
    "load_case",
    "read_manifest",
    "write_manifest",
    "resize_volume",
    "degrade_along_axis",
    "SynthParams",
    "lesion_label",
    "synth_case",
    "synth_generate",
    "load_split",
]

FORMAT_TAG = "hvan-volume-v1"
IMAGING_AXIS = {View.TRANSVERSE: 2, View.SAGITTAL: 0}


class DataError(Exception):
    """Missing, corrupt or inconsistent case data."""


@dataclass
class CasePair:
    id: str
    vol_t: np.ndarray | None
    vol_s: np.ndarray | None
    label: int


@dataclass
class ManifestRow:
    id: str
    path_t: str
    path_s: str
    label: int
    split: str


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def save_volume(path, vol, view, spacing=(1.0, 1.0, 1.0)) -> None:
    vol = np.asarray(vol)
    if vol.ndim != 3:
        raise ValueError(f"volume must be 3D, got shape {vol.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(vol, dtype="<f4").tofile(path)
    meta = {"format": FORMAT_TAG, "shape": list(vol.shape), "view": View(view).value, "spacing": list(spacing)}
    _sidecar(path).write_text(json.dumps(meta, sort_keys=True))


def read_volume(path) -> tuple[np.ndarray, dict]:
    """Raw volume as stored (no normalization) and its sidecar."""
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text())
    except FileNotFoundError as e:
        raise DataError(f"missing sidecar for {path}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt sidecar for {path}: {e}") from e
    if meta.get("format") != FORMAT_TAG:
        raise DataError(f"{_sidecar(path)}: bad format tag {meta.get('format')!r}")
    shape = tuple(meta.get("shape", ()))
    if len(shape) != 3 or any(not isinstance(s, int) or s < 1 for s in shape):
        raise DataError(f"{_sidecar(path)}: bad shape {shape}")
    if not path.exists():
        raise DataError(f"missing volume file {path}")
    if path.stat().st_size != 4 * math.prod(shape):
        raise DataError(f"{path}: size {path.stat().st_size} bytes does not match shape {shape}")
    vol = np.fromfile(path, dtype="<f4").reshape(shape)
    if not np.isfinite(vol).all():
        raise DataError(f"{path}: non-finite intensities")
    return vol.astype(np.float32), meta


def normalize(vol: np.ndarray) -> np.ndarray:
    """Per-volume z-score (float64 statistics)."""
    v = vol.astype(np.float64)
    std = v.std()
    out = (v - v.mean()) / (std if std > 0 else 1.0)
    return out.astype(np.float32)


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest {path} not found")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "path_t", "path_s", "label", "split"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"manifest {path} lacks columns {sorted(missing)}")
        for r in reader:
            rows.append(ManifestRow(r["id"], r["path_t"], r["path_s"], int(r["label"]), r["split"]))
    ids = [r.id for r in rows]
    if len(set(ids)) != len(ids):
        raise DataError(f"manifest {path} has duplicate ids")
    bad = {r.split for r in rows} - {"train", "test"}
    if bad:
        raise DataError(f"manifest {path} has unknown splits {sorted(bad)}")
    return rows


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "path_t", "path_s", "label", "split"])
        for r in rows:
            w.writerow([r.id, r.path_t, r.path_s, r.label, r.split])


def load_case(row: ManifestRow, root=".", size=None, views=(View.TRANSVERSE, View.SAGITTAL)) -> CasePair:
    """Read both volumes of a manifest row, optionally resize, then z-score."""
    vols = {}
    for view, rel in ((View.TRANSVERSE, row.path_t), (View.SAGITTAL, row.path_s)):
        if view not in views:
            vols[view] = None
            continue
        vol, meta = read_volume(Path(root) / rel)
        if meta["view"] != view.value:
            raise DataError(f"{rel}: sidecar says {meta['view']}, manifest says {view.value}")
        if size is not None and vol.shape != tuple(size):
            vol = resize_volume(vol, size)
        vols[view] = normalize(vol)
    if row.label not in (0, 1):
        raise DataError(f"case {row.id}: label must be 0 or 1, got {row.label}")
    return CasePair(row.id, vols[View.TRANSVERSE], vols[View.SAGITTAL], row.label)


def load_split(manifest, split=None, size=None, views=(View.TRANSVERSE, View.SAGITTAL)) -> list[CasePair]:
    manifest = Path(manifest)
    rows = read_manifest(manifest)
    return [load_case(r, manifest.parent, size, views) for r in rows if split is None or r.split == split]


def resize_volume(v, target=(128, 128, 128)) -> np.ndarray:
    """Trilinear resize; grid corners map onto grid corners."""
    v = np.asarray(v)
    if v.ndim != 3 or min(v.shape) < 1:
        raise ValueError(f"expected a non-empty 3D volume, got shape {v.shape}")
    target = tuple(int(t) for t in target)
    if v.shape == target:
        return v.copy()
    t = torch.from_numpy(np.ascontiguousarray(v, dtype=np.float64))[None, None]
    out = F.interpolate(t, size=target, mode="trilinear", align_corners=True)
    return out[0, 0].numpy().astype(v.dtype if v.dtype.kind == "f" else np.float32)


def degrade_along_axis(vol, axis, factor=4, sigma=1.5, offset=0) -> np.ndarray:
    """Blur, keep every ``factor``-th slice, and linearly re-interpolate along ``axis``."""
    blurred = gaussian_filter1d(vol, sigma, axis=axis, mode="nearest")
    n = vol.shape[axis]
    kept = np.arange(offset % factor, n, factor)
    sub = np.take(blurred, kept, axis=axis)
    pos = np.clip((np.arange(n) - kept[0]) / factor, 0, len(kept) - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, len(kept) - 1)
    frac = pos - lo
    shape = [1] * vol.ndim
    shape[axis] = n
    frac = frac.reshape(shape)
    return np.take(sub, lo, axis=axis) * (1 - frac) + np.take(sub, hi, axis=axis) * frac


@dataclass
class SynthParams:
    """Knobs of the phantom. Radii and the background scale are fractions of
    ``size``; ``edge``, ``decimation`` and ``blur_sigma`` are in voxels."""

    base_radius: float = 0.13  # fraction of size
    radius_jitter: float = 0.1  # relative
    neg_elongation: tuple = (1.0, 1.2)
    pos_elongation: tuple = (2.0, 2.4)
    threshold: float = 1.6
    contrast: float = 1.5
    contrast_jitter: float = 0.7  # log-uniform half-width, drawn per case
    # candidate elongation axes; the two imaging axes, so each view alone sees
    # the long axis in-plane for only part of the cases
    axes: tuple = (0, 2)
    edge: float = 0.6
    background_amplitude: float = 0.05
    background_sigma: float = 0.3  # fraction of size
    noise: float = 0.05
    decimation: int = 8
    blur_sigma: float = 9.0


def lesion_label(meta: dict, threshold: float) -> int:
    """Label as a pure function of the stored lesion parameters."""
    radii = meta["radii"]
    return int(max(radii) / min(radii) > threshold)


def _lesion(size, center, radii, edge):
    grid = np.meshgrid(*(np.arange(size, dtype=np.float64),) * 3, indexing="ij")
    r = np.sqrt(sum(((g - c) / a) ** 2 for g, c, a in zip(grid, center, radii)))
    # soft-edged ellipsoid; ``edge`` is the transition width in voxels at the boundary
    scale = edge / min(radii)
    return 1.0 / (1.0 + np.exp((r - 1.0) / scale))


def _max_radius(size, p: SynthParams):
    return p.base_radius * size * (1 + p.radius_jitter) * max(p.neg_elongation[1], p.pos_elongation[1])


def synth_case(rng: np.random.Generator, size: int, label: int, p: SynthParams = SynthParams()):
    """One phantom pair and its parameter record."""
    lo, hi = p.pos_elongation if label else p.neg_elongation
    elongation = float(rng.uniform(lo, hi))
    axis = int(p.axes[rng.integers(len(p.axes))])
    base = p.base_radius * size
    radii = [float(base * (1 + p.radius_jitter * rng.uniform(-1, 1))) for _ in range(3)]
    radii[axis] = min(r for i, r in enumerate(radii) if i != axis) * elongation
    # placement must not depend on the shape, or position would leak the label
    margin = min(_max_radius(size, p) + 2, (size - 1) / 2)
    center = [float(rng.uniform(margin, size - 1 - margin)) for _ in range(3)]

    bg = gaussian_filter(rng.standard_normal((size,) * 3), p.background_sigma * size, mode="wrap")
    bg *= p.background_amplitude / (bg.std() + 1e-12)
    contrast = p.contrast * math.exp(p.contrast_jitter * rng.uniform(-1, 1))
    clean = bg + contrast * _lesion(size, center, radii, p.edge)

    vols = {}
    for view in (View.TRANSVERSE, View.SAGITTAL):
        offset = int(rng.integers(p.decimation))
        v = clean + p.noise * rng.standard_normal(clean.shape)
        vols[view] = degrade_along_axis(v, IMAGING_AXIS[view], p.decimation, p.blur_sigma, offset)
    meta = {
        "center": center,
        "radii": radii,
        "axis": axis,
        "elongation": elongation,
        "threshold": p.threshold,
        "contrast": contrast,
        "label": lesion_label({"radii": radii}, p.threshold),
    }
    return vols[View.TRANSVERSE].astype(np.float32), vols[View.SAGITTAL].astype(np.float32), meta


def synth_generate(n_cases, size, seed, out_dir, test_fraction=0.2, params: SynthParams = SynthParams()):
    """Write ``n_cases`` phantom pairs plus ``manifest.csv``; returns the manifest rows.

    Labels are balanced overall and within each split.
    """
    if n_cases < 4:
        raise ValueError("need at least 4 cases")
    if size < 32 or size % 32:
        raise ValueError(f"size must be a positive multiple of 32, got {size}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    n_test = int(round(n_cases * test_fraction))
    splits = ["test"] * n_test + ["train"] * (n_cases - n_test)
    labels = []
    for s in ("test", "train"):
        n = splits.count(s)
        lab = np.array([i % 2 for i in range(n)])
        labels.extend(rng.permutation(lab).tolist())

    rows = []
    for i, (split, label) in enumerate(zip(splits, labels)):
        case_id = f"case{i:04d}"
        vol_t, vol_s, meta = synth_case(rng, size, label, params)
        assert meta["label"] == label
        save_volume(out / f"{case_id}_t.raw", vol_t, View.TRANSVERSE)
        save_volume(out / f"{case_id}_s.raw", vol_s, View.SAGITTAL)
        meta.update(id=case_id, split=split, seed=seed, size=size)
        (out / f"{case_id}.meta.json").write_text(json.dumps(meta, sort_keys=True))
        rows.append(ManifestRow(case_id, f"{case_id}_t.raw", f"{case_id}_s.raw", label, split))
    write_manifest(out / "manifest.csv", rows)
    return rows
