from .base import NOISE, ClusteringResult, relabel_dense
from .distance import core_distances, cross_distances, pairwise_distances
from .hdbscan import HDBSCAN, HdbscanConfig, hdbscan_fit, hdbscan_trace
from .kmeans import KMeans, KMeansConfig, kmeans_fit
from .mst import mutual_reachability_mst, single_linkage_tree

__all__ = [
    "NOISE",
    "ClusteringResult",
    "relabel_dense",
    "core_distances",
    "cross_distances",
    "pairwise_distances",
    "HDBSCAN",
    "HdbscanConfig",
    "hdbscan_fit",
    "hdbscan_trace",
    "KMeans",
    "KMeansConfig",
    "kmeans_fit",
    "mutual_reachability_mst",
    "single_linkage_tree",
]
