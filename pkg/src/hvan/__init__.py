"""Dual-view volume classifier with intra-view, cross-view attention and adaptive fusion."""

from .cam import cam
from .core import PlanarBatch, View, from_planes, to_planes
from .cva import CrossViewAttention, hva_stage
from .data import CasePair, DataError, SynthParams, load_split, synth_generate
from .estimator import HVANClassifier
from .fusion import HybridViewFusion
from .iva import IntraViewAttention, PairedAttention
from .network import ABLATION_GRID, HybridViewNet, ModelConfig, build, predict_proba
from .runs import RunConfig
from .training import (
    Checkpoint,
    MetricsReport,
    TrainConfig,
    auc,
    confusion_metrics,
    evaluate,
    focal_loss,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
