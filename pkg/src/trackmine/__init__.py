"""Discover object categories by clustering embeddings of merged video tracks."""
from .clustering import HDBSCAN, ClusteringResult, HdbscanConfig, KMeans, KMeansConfig, hdbscan_fit, kmeans_fit
from .core import (
    AnnotatedTrack,
    Annotation,
    BoundingBox,
    EmbeddingMatrix,
    FrameObservation,
    RleMask,
    Track,
    Tracklet,
    mask_iou,
)
from .embedding import PCA, pca_fit, pca_transform, representative_embedding, summarize_tracks
from .evaluation import ami, distribution_report, eval_filter, outlier_curve
from .merge import MergeConfig, SelectionTimeline, merge_tracklets, overlap_ratio
from .synthetic import SyntheticSpec, generate_collection, generate_tracklet_stream

__version__ = "0.1.0"

__all__ = [
    "AnnotatedTrack",
    "Annotation",
    "BoundingBox",
    "ClusteringResult",
    "EmbeddingMatrix",
    "FrameObservation",
    "HDBSCAN",
    "HdbscanConfig",
    "KMeans",
    "KMeansConfig",
    "MergeConfig",
    "PCA",
    "RleMask",
    "SelectionTimeline",
    "SyntheticSpec",
    "Track",
    "Tracklet",
    "ami",
    "distribution_report",
    "eval_filter",
    "generate_collection",
    "generate_tracklet_stream",
    "hdbscan_fit",
    "kmeans_fit",
    "mask_iou",
    "merge_tracklets",
    "outlier_curve",
    "overlap_ratio",
    "pca_fit",
    "pca_transform",
    "representative_embedding",
    "summarize_tracks",
]
