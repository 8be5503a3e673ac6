"""patchcascade: uncertainty-guided patch cascades for in-context segmentation."""
