"""Watermark segment localization in mixed-source token streams."""

from .calibration import CertMismatch, ThresholdCert, calibrate_threshold, null_fpr_estimate
from .intervals import Segments
from .metrics import EvalReport, evaluate, iou, modified_rand_index, precision_recall_f1, rand_index
from .schemes import PivotSeries, SchemeSpec
from .segmentation import SegmenterConfig, SegmentationResult, naive_estimate, segment_series
from .streams import NtpModel, StreamSpec, generate_stream, read_stream_jsonl, write_stream_jsonl

__all__ = [
    "CertMismatch",
    "EvalReport",
    "NtpModel",
    "PivotSeries",
    "SchemeSpec",
    "SegmentationResult",
    "SegmenterConfig",
    "Segments",
    "StreamSpec",
    "ThresholdCert",
    "calibrate_threshold",
    "evaluate",
    "generate_stream",
    "iou",
    "modified_rand_index",
    "naive_estimate",
    "null_fpr_estimate",
    "precision_recall_f1",
    "rand_index",
    "read_stream_jsonl",
    "segment_series",
    "write_stream_jsonl",
]

__version__ = "0.1.0"
