"""Episode-level evaluation: predictors, Dice tables and patch overlays."""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image, ImageDraw

from ..baseline import GlobalModelConfig, global_forward
from ..cascade import CascadeConfig
from ..data.task import TaskInstance
from ..graph import forward
from ..numerics import ParamSet, RngStream
from ..numerics import functional as F
from ..object_models import Arch, DiceResult, EpisodeScore
from ..state import PredictionPyramid
from .metrics import dice_score

logger = logging.getLogger(__name__)

EVAL_STREAM = 0xE7A1
CLASS_TABLE_COLUMNS = ["class_name", "dice_mean", "dice_std", "n"]
EPISODE_COLUMNS = ["episode_id", "class_name", "arch", "dice", "foreground"]

Predictor = Callable[[TaskInstance], np.ndarray]


def episode_stream(seed: int, episode_id: str) -> RngStream:
    """Per-episode stream keyed by the id, so results do not depend on scheduling."""
    return RngStream(seed, EVAL_STREAM).child(zlib.crc32(episode_id.encode("utf-8")))


def cascade_predictor(config: CascadeConfig, params: ParamSet, seed: int) -> Predictor:
    def predict(task: TaskInstance) -> np.ndarray:
        return forward(task, config, params, episode_stream(seed, task.episode_id)).final

    return predict


def global_predictor(config: GlobalModelConfig, params: ParamSet) -> Predictor:
    def predict(task: TaskInstance) -> np.ndarray:
        return global_forward(task, config, params)

    return predict


def evaluate_episodes(
    tasks: Sequence[TaskInstance], predict: Predictor, arch: Arch, jobs: int = 1
) -> Tuple[DiceResult, List[EpisodeScore]]:
    """Dice for every episode; results come back sorted by episode id."""

    def score(task: TaskInstance) -> EpisodeScore:
        prob = predict(task)
        return EpisodeScore(
            episode_id=task.episode_id,
            class_name=task.class_name,
            arch=arch,
            dice=dice_score(prob, task.target_mask),
            foreground=int(task.target_mask.sum()),
        )

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        scores = sorted(pool.map(score, tasks), key=lambda s: s.episode_id)
    result = DiceResult.from_scores({s.episode_id: s.dice for s in scores})
    logger.info("%s: Dice %.4f ± %.4f over %d episodes", arch, result.mean, result.std, result.n)
    return result, scores


def episodes_frame(scores: Sequence[EpisodeScore]) -> pd.DataFrame:
    return pd.DataFrame([s.model_dump() for s in scores], columns=EPISODE_COLUMNS)


def class_table(scores: Sequence[EpisodeScore]) -> pd.DataFrame:
    """Mean ± std per class, then an Overall row."""
    rows = []
    for name in sorted({s.class_name for s in scores}):
        result = DiceResult.from_scores({s.episode_id: s.dice for s in scores if s.class_name == name})
        rows.append([name, result.mean, result.std, result.n])
    overall = DiceResult.from_scores({s.episode_id: s.dice for s in scores})
    rows.append(["Overall", overall.mean, overall.std, overall.n])
    return pd.DataFrame(rows, columns=CLASS_TABLE_COLUMNS)


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def dump_patch_overlays(task: TaskInstance, pyramid: PredictionPyramid, out_dir: Path) -> List[Path]:
    """One PGM per level: image | image with sampled target boxes | probabilities."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, level in enumerate(pyramid.levels):
        r = level.resolution
        image = F.resize_array(task.target_image, r, "area" if r < task.resolution else "bilinear")
        boxed = Image.fromarray(_to_uint8(image))
        draw = ImageDraw.Draw(boxed)
        for box in level.patches.boxes:
            draw.rectangle([box.x0, box.y0, box.x0 + box.size - 1, box.y0 + box.size - 1], outline=255)
        strip = np.concatenate([_to_uint8(image), np.asarray(boxed), _to_uint8(level.probabilities())], axis=1)
        path = out_dir / f"{task.episode_id}_level{index}_r{r}.pgm"
        Image.fromarray(strip).save(path, format="PPM")
        paths.append(path)
    return paths
