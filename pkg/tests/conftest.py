import hashlib

import numpy as np
import pytest

from freeseg.synth import Background, Segment


def make_background(rng, image_id, width=64, height=48, n_objects=3):
    image = rng.integers(0, 256, (height, width, 3), dtype=np.uint8)
    anns = []
    for k in range(n_objects):
        m = np.zeros((height, width), bool)
        x, y = rng.integers(0, width - 8), rng.integers(0, height - 8)
        m[y:y + rng.integers(4, 12), x:x + rng.integers(4, 12)] = True
        anns.append((100 + k, m, {"iscrowd": 0}))
    return Background(image_id, image=image, annotations=anns)


def make_segment(rng, record_id, class_id, size=40):
    image = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
    yy, xx = np.mgrid[:size, :size]
    mask = (yy - size / 2) ** 2 + (xx - size / 2) ** 2 <= (size / 3) ** 2
    return Segment(record_id, class_id, image=image, mask=mask)


def scene_digest(scene) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(scene.image).tobytes())
    h.update(repr(scene.background_id).encode())
    for a in scene.annotations:
        h.update(repr((a.class_id, a.source, a.paste_index, a.rle.counts)).encode())
    return h.hexdigest()


@pytest.fixture
def catalogs():
    rng = np.random.default_rng(1234)
    bgs = [make_background(rng, i + 1) for i in range(3)]
    segs = [make_segment(rng, f"seg{i}", 7 + i % 2) for i in range(4)]
    return bgs, segs
