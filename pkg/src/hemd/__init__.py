"""Instance segmentation post-processing for probability-map videos.

Per-frame candidate forests built from super-level sets of the foreground
probability, and candidate selection by iterative matching between
neighbouring frames solved as exact 0/1 programs.
"""

from hemd.core import Region, iou, label_map_from_regions, region_size, regions_from_label_map
from hemd.forest import CandidateForest, CandidateNode, build_forest
from hemd.pipeline import PipelineConfig, run
from hemd.probmap_io import ProbMap, load_sequence, quantize, save_labels

__all__ = [
    "CandidateForest",
    "CandidateNode",
    "PipelineConfig",
    "ProbMap",
    "Region",
    "build_forest",
    "iou",
    "label_map_from_regions",
    "load_sequence",
    "quantize",
    "region_size",
    "regions_from_label_map",
    "run",
    "save_labels",
]

__version__ = "0.1.0"
