"""
Data ingestion: IDX image/label files, leave-one-label-out splits and
synthetic Gaussian blobs for desk-scale runs.
"""

from .idx_loader import load_idx_dataset, load_idx_images, load_idx_labels, write_idx_dataset
from .ood_split import make_ood_split
from .synthetic import synth_blobs, train_test_blobs

__all__ = [
    "load_idx_dataset",
    "load_idx_images",
    "load_idx_labels",
    "write_idx_dataset",
    "make_ood_split",
    "synth_blobs",
    "train_test_blobs",
]
