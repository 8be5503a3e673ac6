"""Rendering of synthetic in-context segmentation episodes.

A *case* fixes the background texture and the intensity statistics shared by
every shape in its images; episodes of the same case look alike the way
slices of one scan do. The target shape and its distractors draw from the
same intensity distribution, so only the shape tells them apart.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..errors import ContextPoolError, EpisodeGenerationError
from ..numerics import RngStream
from .shapes import SHAPE_CLASSES, ShapeClass, classes_in, draw_params, render_shape
from .task import ContextPair, TaskInstance

logger = logging.getLogger(__name__)

MIN_FOREGROUND = 30
MAX_ATTEMPTS = 100
STYLE_STREAM = 0x5717_1E
DEFAULT_NOISE_SIGMA = 0.05


class CaseStyle(BaseModel):
    background: float
    texture_amplitude: float
    texture_freq: Tuple[float, float]
    texture_phase: float
    foreground: float
    foreground_jitter: float


def case_style(seed: int, case_id: int) -> CaseStyle:
    """Appearance of a case; depends only on (seed, case id)."""
    rng = RngStream(seed, STYLE_STREAM).child(case_id)
    background = 0.15 + 0.3 * rng.uniform()
    contrast = (0.25 + 0.2 * rng.uniform()) * (1.0 if rng.uniform() < 0.5 else -1.0)
    foreground = background + contrast
    if not 0.05 <= foreground <= 0.95:
        foreground = background - contrast
    return CaseStyle(
        background=float(background),
        texture_amplitude=float(0.03 + 0.07 * rng.uniform()),
        texture_freq=(float(1 + 3 * rng.uniform()), float(1 + 3 * rng.uniform())),
        texture_phase=float(2 * np.pi * rng.uniform()),
        foreground=float(foreground),
        foreground_jitter=0.05,
    )


def coverage_filter(mask: np.ndarray) -> bool:
    """True iff the mask has at least MIN_FOREGROUND foreground pixels."""
    return int(np.count_nonzero(np.asarray(mask) > 0)) >= MIN_FOREGROUND


def _background(style: CaseStyle, resolution: int) -> np.ndarray:
    ys, xs = np.mgrid[0:resolution, 0:resolution] / resolution
    fy, fx = style.texture_freq
    wave = np.sin(2 * np.pi * (fy * ys + fx * xs) + style.texture_phase)
    return style.background + style.texture_amplitude * wave


def distractor_classes(shape_class: ShapeClass) -> List[ShapeClass]:
    """Other classes that may appear as distractors.

    Training episodes only ever show training classes, so held-out shapes
    stay unseen until evaluation.
    """
    pool = classes_in("train") if shape_class.split == "train" else list(SHAPE_CLASSES.values())
    return [c for c in pool if c.name != shape_class.name]


def render_instance(
    shape_class: ShapeClass,
    style: CaseStyle,
    resolution: int,
    rng: RngStream,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
) -> Tuple[np.ndarray, np.ndarray]:
    """One image and its target mask, with 1-3 distractor shapes.

    Redraws the target until it passes the coverage filter.
    """
    for attempt in range(MAX_ATTEMPTS):
        attempt_rng = rng.child(attempt)
        mask = render_shape(shape_class.name, resolution, draw_params(shape_class.name, resolution, attempt_rng.child(0)))
        if coverage_filter(mask):
            break
    else:
        raise EpisodeGenerationError(
            f"{shape_class.name} at r={resolution}: no instance with >= {MIN_FOREGROUND} foreground pixels "
            f"after {MAX_ATTEMPTS} attempts"
        )

    image = _background(style, resolution)
    others = distractor_classes(shape_class)
    n_distractors = int(attempt_rng.integers(1, 4))
    occupied = mask.copy()
    for k in range(n_distractors):
        d_rng = attempt_rng.child(1 + k)
        name = others[int(d_rng.integers(0, len(others)))].name
        for placement in range(10):
            shape = render_shape(name, resolution, draw_params(name, resolution, d_rng.child(placement)))
            if shape.any() and not (shape & occupied).any():
                image = np.where(shape, style.foreground + style.foreground_jitter * d_rng.normal(), image)
                occupied |= shape
                break
    image = np.where(mask, style.foreground + style.foreground_jitter * attempt_rng.normal(), image)
    image = image + attempt_rng.normal(0.0, noise_sigma, image.shape)
    # Quantise to 8 bits so in-memory episodes equal their PGM round trip.
    image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
    return image, mask.astype(np.float64)


def generate_episode(
    shape_class: ShapeClass,
    case_id: int,
    resolution: int,
    rng: RngStream,
    n_context: int = 3,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    episode_id: str = "",
) -> TaskInstance:
    """Target plus ``n_context`` pairs, all of one class and one case."""
    if resolution < 16:
        raise ValueError(f"episodes need resolution >= 16, got {resolution}")
    style = case_style(rng.seed, case_id)
    image, mask = render_instance(shape_class, style, resolution, rng.child(0), noise_sigma)
    context = []
    for i in range(n_context):
        c_image, c_mask = render_instance(shape_class, style, resolution, rng.child(1 + i), noise_sigma)
        context.append(ContextPair(image=c_image, mask=c_mask, case_id=case_id, source_episode=episode_id))
    return TaskInstance(
        episode_id=episode_id,
        class_name=shape_class.name,
        case_id=case_id,
        target_image=image,
        target_mask=mask,
        context=context,
    )


def _same_episode(a: TaskInstance, b: TaskInstance) -> bool:
    # Unnamed episodes only match themselves.
    return a is b or (bool(a.episode_id) and a.episode_id == b.episode_id)


def select_context(
    pool: Sequence[TaskInstance], target: TaskInstance, n_context: int, rng: RngStream
) -> List[ContextPair]:
    """Pick context pairs from other episodes: same case first, then same class.

    Order within each tier is shuffled by ``rng``; the target episode itself
    is never chosen.
    """
    same_class = [t for t in pool if t.class_name == target.class_name and not _same_episode(t, target)]
    if len(same_class) < n_context:
        raise ContextPoolError(
            f"class {target.class_name!r}: pool holds {len(same_class)} other episodes, {n_context} context pairs needed"
        )
    same_case = [t for t in same_class if t.case_id == target.case_id]
    other_case = [t for t in same_class if t.case_id != target.case_id]
    ordered: List[TaskInstance] = []
    for tier_index, tier in enumerate((same_case, other_case)):
        order = rng.child(tier_index).permutation(len(tier))
        ordered.extend(tier[i] for i in order)
    return [
        ContextPair(image=t.target_image, mask=t.target_mask, case_id=t.case_id, source_episode=t.episode_id)
        for t in ordered[:n_context]
    ]


def resample_context(task: TaskInstance, pool: Sequence[TaskInstance], rng: RngStream, n_context: Optional[int] = None):
    """Replace an episode's context with pairs chosen by ``select_context``."""
    return task.with_context(select_context(pool, task, n_context or task.n_context, rng))
