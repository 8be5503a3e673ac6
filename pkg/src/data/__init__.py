"""Synthetic shape-class episodes for in-context segmentation."""

from .dataset import (
    DatasetManifest,
    generate_dataset,
    load_index,
    load_manifest,
    load_split,
    plan_episodes,
    read_pgm,
    split_summary,
    write_dataset,
    write_pgm,
)
from .shapes import SHAPE_CLASSES, ShapeClass, classes_in, get_class
from .synthetic import coverage_filter, generate_episode, resample_context, select_context
from .task import ContextPair, TaskInstance
