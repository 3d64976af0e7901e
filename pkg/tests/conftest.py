import json

import numpy as np
import pytest

from freqforensics.preprocess import save_gray_png
from helpers import shaped_noise_image


@pytest.fixture
def image_corpus(tmp_path):
    """Writes a two-class PNG corpus + manifest; returns the manifest path."""

    def build(n_per_class=12, size=64, seed=0, split=None):
        rng = np.random.default_rng(seed)
        classes = []
        for label, attenuate in (("real", None), ("genA", 0.75)):
            root = tmp_path / "corpus" / label
            root.mkdir(parents=True)
            for i in range(n_per_class):
                img = shaped_noise_image(
                    rng, (size, size), attenuate_above=attenuate, attenuation=0.2
                )
                save_gray_png(img, root / f"{label}_{i:04d}.png")
            classes.append({"label": label, "root": str(root), "glob": "*.png"})
        manifest = {"name": "tiny", "seed": 11, "classes": classes}
        if split is not None:
            manifest["split"] = split
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(manifest))
        return path

    return build
