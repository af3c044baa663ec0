"""Adversarial disruption of heat-map facial landmark extractors.

Synthetic faces with exact landmarks, small trainable extractors, the
cosine heat-map attack and its baselines, metrics, a face-alignment and
reconstruction stand-in for the swap pipeline, and an experiment harness.
"""

from .alignment import SimilarityTransform, align_face, canonical_template, similarity_transform, warp_crop
from .attacks import (
    AttackConfig,
    AttackResult,
    fgsm_attack,
    ifgsm_attack,
    lbmix_attack,
    lbtrans_attack,
    mifgsm_attack,
    project_linf,
    run_attack,
)
from .datasets import DatasetHandle, export_dataset, load_annotated_dataset, split_dataset, synthetic_dataset
from .faces import LANDMARK_NAMES, FaceParams, HeatmapSet, LandmarkSet, render_face, render_heatmap_targets, sample_face_params
from .losses import heatmap_cosine_loss
from .synthesis import SynthCheckpoint, ssim_w_pipeline, synthesize, train_synthesizer

__version__ = "0.1.0"

__all__ = [
    "LANDMARK_NAMES",
    "AttackConfig",
    "AttackResult",
    "DatasetHandle",
    "FaceParams",
    "HeatmapSet",
    "LandmarkSet",
    "SimilarityTransform",
    "SynthCheckpoint",
    "align_face",
    "canonical_template",
    "export_dataset",
    "fgsm_attack",
    "heatmap_cosine_loss",
    "ifgsm_attack",
    "lbmix_attack",
    "lbtrans_attack",
    "load_annotated_dataset",
    "mifgsm_attack",
    "project_linf",
    "render_face",
    "render_heatmap_targets",
    "run_attack",
    "sample_face_params",
    "similarity_transform",
    "split_dataset",
    "ssim_w_pipeline",
    "synthesize",
    "train_synthesizer",
    "synthetic_dataset",
    "warp_crop",
]
