import numpy as np

from src.data import ContextPair, TaskInstance


def disk_mask(resolution: int, cy: float, cx: float, radius: float) -> np.ndarray:
    ys, xs = np.mgrid[0:resolution, 0:resolution]
    return (((ys + 0.5 - cy) ** 2 + (xs + 0.5 - cx) ** 2) <= radius**2).astype(np.float64)


def make_task(resolution: int = 16, n_context: int = 2, seed: int = 0, episode_id: str = "ep-0", class_name: str = "disk") -> TaskInstance:
    """Disk episode with noisy images; small enough for finite differences."""
    rng = np.random.default_rng(seed)
    centre = resolution / 2

    def pair(offset):
        mask = disk_mask(resolution, centre + offset, centre - offset, resolution / 4)
        image = 0.2 + 0.6 * mask + 0.05 * rng.standard_normal((resolution, resolution))
        return image, mask

    target_image, target_mask = pair(0.0)
    context = [ContextPair(image=img, mask=m) for img, m in (pair(1.0 + i) for i in range(n_context))]
    return TaskInstance(
        episode_id=episode_id,
        class_name=class_name,
        target_image=target_image,
        target_mask=target_mask,
        context=context,
    )
