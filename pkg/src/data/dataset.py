"""Dataset manifests, generation and on-disk layout.

Layout under the output directory::

    manifest.yaml
    episodes.csv
    <split>/<episode_id>/target_image.pgm
    <split>/<episode_id>/target_mask.pgm
    <split>/<episode_id>/context_<i>_image.pgm
    <split>/<episode_id>/context_<i>_mask.pgm

Images are 8-bit binary PGM (P5, maxval 255); masks store 0/255.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from PIL import Image
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..errors import DatasetError
from ..numerics import RngStream
from .shapes import Split, classes_in, get_class
from .synthetic import DEFAULT_NOISE_SIGMA, generate_episode
from .task import ContextPair, TaskInstance

logger = logging.getLogger(__name__)

EPISODE_STREAM = 0xE915_0DE
HELDOUT_CASE_OFFSET = 1_000_000
SPLITS: Tuple[Split, ...] = ("train", "heldout")
INDEX_COLUMNS = ["episode_id", "split", "class_name", "case_id", "foreground"]


class DatasetManifest(BaseModel):
    """Everything needed to regenerate a dataset bit for bit."""

    seed: int = Field(ge=0, lt=2**64)
    resolution: int = Field(default=64, ge=16)
    episodes: Dict[str, int] = Field(description="Episode count per split")
    class_split: Dict[str, List[str]] = Field(
        default_factory=lambda: {s: [c.name for c in classes_in(s)] for s in SPLITS}
    )
    n_context: int = Field(default=3, ge=1)
    episodes_per_case: int = Field(default=2, ge=1)
    noise_sigma: float = Field(default=DEFAULT_NOISE_SIGMA, ge=0.0)

    @model_validator(mode="after")
    def check_splits(self):
        if set(self.episodes) - set(SPLITS):
            raise ValueError(f"unknown split in {sorted(self.episodes)}; valid splits are {SPLITS}")
        train, heldout = set(self.class_split.get("train", [])), set(self.class_split.get("heldout", []))
        if not train or not heldout or train & heldout:
            raise ValueError("train and held-out classes must be nonempty and disjoint")
        for name in train | heldout:
            get_class(name)
        return self

    @property
    def total_episodes(self) -> int:
        return sum(self.episodes.values())

    @classmethod
    def for_total(cls, seed: int, total: int, heldout_fraction: float = 0.25, **kwargs) -> "DatasetManifest":
        if total < 2:
            raise ValueError(f"need at least 2 episodes (one per split), got {total}")
        heldout = min(max(1, int(round(total * heldout_fraction))), total - 1)
        return cls(seed=seed, episodes={"train": total - heldout, "heldout": heldout}, **kwargs)


class PlannedEpisode(BaseModel):
    episode_id: str
    split: Split
    index: int
    class_name: str
    case_id: int


def plan_episodes(manifest: DatasetManifest) -> List[PlannedEpisode]:
    """Round-robin classes; each (class, case) gets ``episodes_per_case`` episodes.

    Held-out cases are numbered from HELDOUT_CASE_OFFSET so no case appears
    in both splits.
    """
    plan = []
    for split in SPLITS:
        classes = manifest.class_split[split]
        offset = 0 if split == "train" else HELDOUT_CASE_OFFSET
        for i in range(manifest.episodes.get(split, 0)):
            per_class = i // len(classes)
            plan.append(
                PlannedEpisode(
                    episode_id=f"{split}-{i:05d}",
                    split=split,
                    index=i,
                    class_name=classes[i % len(classes)],
                    case_id=offset + per_class // manifest.episodes_per_case,
                )
            )
    return plan


def _episode_rng(manifest: DatasetManifest, planned: PlannedEpisode) -> RngStream:
    return RngStream(manifest.seed, EPISODE_STREAM).child(SPLITS.index(planned.split)).child(planned.index)


def build_episode(manifest: DatasetManifest, planned: PlannedEpisode) -> TaskInstance:
    return generate_episode(
        get_class(planned.class_name),
        planned.case_id,
        manifest.resolution,
        _episode_rng(manifest, planned),
        n_context=manifest.n_context,
        noise_sigma=manifest.noise_sigma,
        episode_id=planned.episode_id,
    )


def generate_dataset(manifest: DatasetManifest, jobs: int = 1) -> Dict[str, List[TaskInstance]]:
    """Render every planned episode; output order is independent of ``jobs``."""
    plan = plan_episodes(manifest)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        episodes = list(pool.map(lambda planned: build_episode(manifest, planned), plan))
    out: Dict[str, List[TaskInstance]] = {s: [] for s in SPLITS}
    for planned, task in zip(plan, episodes):
        out[planned.split].append(task)
    return out


# PGM I/O


def write_pgm(path: Path, values: np.ndarray) -> None:
    """Store [0, 1] values as 8-bit binary PGM."""
    raw = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(raw).save(path, format="PPM")


def read_pgm(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise DatasetError(f"{path}: expected 8-bit grayscale PGM, got mode {img.mode}")
            return np.asarray(img, dtype=np.uint8).astype(np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc


def write_episode(root: Path, split: str, task: TaskInstance) -> Path:
    folder = root / split / task.episode_id
    folder.mkdir(parents=True, exist_ok=True)
    write_pgm(folder / "target_image.pgm", task.target_image)
    write_pgm(folder / "target_mask.pgm", task.target_mask)
    for i, pair in enumerate(task.context):
        write_pgm(folder / f"context_{i}_image.pgm", pair.image)
        write_pgm(folder / f"context_{i}_mask.pgm", pair.mask)
    return folder


def write_dataset(manifest: DatasetManifest, out: Union[str, Path], jobs: int = 1) -> pd.DataFrame:
    """Generate and store a dataset; returns the episode index."""
    root = Path(out)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create dataset directory {root}: {exc}") from exc
    splits = generate_dataset(manifest, jobs=jobs)
    rows = []
    for split, tasks in splits.items():
        for task in tasks:
            write_episode(root, split, task)
            rows.append([task.episode_id, split, task.class_name, task.case_id, int(task.target_mask.sum())])
    index = pd.DataFrame(rows, columns=INDEX_COLUMNS)
    index.to_csv(root / "episodes.csv", index=False)
    (root / "manifest.yaml").write_text(yaml.safe_dump(manifest.model_dump(), sort_keys=False), encoding="utf-8")
    logger.info("wrote %d episodes to %s", len(index), root)
    return index


def load_manifest(root: Union[str, Path]) -> DatasetManifest:
    path = Path(root) / "manifest.yaml"
    if not path.is_file():
        raise DatasetError(f"no dataset at {root} (missing {path.name})")
    try:
        return DatasetManifest.model_validate(yaml.safe_load(path.read_text(encoding="utf-8")))
    except (yaml.YAMLError, ValidationError) as exc:
        raise DatasetError(f"{path}: invalid manifest: {exc}") from exc


def load_index(root: Union[str, Path]) -> pd.DataFrame:
    path = Path(root) / "episodes.csv"
    if not path.is_file():
        raise DatasetError(f"no episode index at {path}")
    return pd.read_csv(path, dtype={"episode_id": str, "split": str, "class_name": str})


def load_split(root: Union[str, Path], split: str) -> List[TaskInstance]:
    """Read one split back, sorted by episode id."""
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}; expected one of {SPLITS}")
    root = Path(root)
    manifest = load_manifest(root)
    index = load_index(root)
    rows = index[index["split"] == split].sort_values("episode_id")
    tasks = []
    for row in rows.itertuples(index=False):
        folder = root / split / row.episode_id
        context = [
            ContextPair(
                image=read_pgm(folder / f"context_{i}_image.pgm"),
                mask=read_pgm(folder / f"context_{i}_mask.pgm"),
                case_id=int(row.case_id),
                source_episode=row.episode_id,
            )
            for i in range(manifest.n_context)
        ]
        tasks.append(
            TaskInstance(
                episode_id=row.episode_id,
                class_name=row.class_name,
                case_id=int(row.case_id),
                target_image=read_pgm(folder / "target_image.pgm"),
                target_mask=read_pgm(folder / "target_mask.pgm"),
                context=context,
            )
        )
    return tasks


def split_summary(index: pd.DataFrame) -> pd.DataFrame:
    """Episode counts per split and class."""
    return index.groupby(["split", "class_name"]).size().rename("episodes").reset_index()
