"""Random instance builders shared by unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from trackmine.core import BoundingBox, FrameObservation, RleMask, Tracklet

CANVAS_W, CANVAS_H = 12, 10


def _box_raster(box: BoundingBox) -> np.ndarray:
    cols = np.arange(CANVAS_W) + 0.5
    rows = np.arange(CANVAS_H) + 0.5
    inx = (cols >= box.x) & (cols < box.x + box.w)
    iny = (rows >= box.y) & (rows < box.y + box.h)
    return iny[:, None] & inx[None, :]


def random_merge_instance(rng: np.random.Generator, max_tracklets: int = 20, max_frames: int = 50):
    """Tracklets of a few moving objects plus a per-frame selection.

    Pieces of the same object share geometry (as a box or as its RLE
    raster), so junction overlaps are frequent; duplicated pieces create
    exact ties between candidates.
    """
    n_frames = int(rng.integers(2, max_frames + 1))
    n_objects = int(rng.integers(1, 4))
    paths = []
    for _ in range(n_objects):
        x, y = rng.uniform(0, CANVAS_W - 3), rng.uniform(0, CANVAS_H - 3)
        w, h = rng.uniform(1.5, 5), rng.uniform(1.5, 5)
        vx, vy = rng.uniform(-0.3, 0.3, size=2)
        paths.append([BoundingBox(float(x + vx * f), float(y + vy * f), float(w), float(h)) for f in range(n_frames)])

    budget = int(rng.integers(1, max_tracklets + 1))
    use_str = rng.random() < 0.2
    specs = []  # (object, first frame, last frame, selected from, selected to)
    for obj in range(n_objects):
        if len(specs) >= budget:
            break
        a = int(rng.integers(n_frames))
        b = int(rng.integers(a, n_frames))
        cuts = sorted({int(c) for c in rng.integers(a + 1, b + 1, size=int(rng.integers(0, 6)))}) if b > a else []
        bounds = [a] + cuts + [b + 1]
        prev_lo = None
        for k in range(len(bounds) - 1):
            if len(specs) >= budget:
                break
            lo = bounds[k]
            if prev_lo is not None:
                lo = int(rng.integers(prev_lo, bounds[k] + 1))  # extend back over the predecessor
            specs.append((obj, lo, bounds[k + 1] - 1, bounds[k], bounds[k + 1] - 1))
            prev_lo = lo
    while len(specs) < budget and rng.random() < 0.7:
        obj = int(rng.integers(n_objects))
        a = int(rng.integers(n_frames))
        b = int(rng.integers(a, min(n_frames, a + 15)))
        specs.append((obj, a, b, a, b))

    tracklets, selected = [], []
    for t, (obj, a, b, sa, sb) in enumerate(specs):
        as_rle = rng.random() < 0.5
        noisy = rng.random() < 0.2
        obs = []
        for f in range(a, b + 1):
            box = paths[obj][f]
            if noisy and rng.random() < 0.5:
                box = paths[int(rng.integers(n_objects))][f]
            geom = RleMask.from_array(_box_raster(box)) if as_rle else box
            obs.append(FrameObservation(f, geom))
        tid = f"t{t:02d}" if use_str else int(t * 3 % 41)
        tracklets.append(Tracklet(tid, obs))
        selected.append((tid, sa, sb))
    if rng.random() < 0.3:
        k = int(rng.integers(len(tracklets)))
        dup = Tracklet("dup" if use_str else 1000, tracklets[k].observations)
        tracklets.append(dup)
        selected.append((dup.id, selected[k][1], selected[k][2]))

    frames = {}
    for f in range(n_frames):
        if rng.random() < 0.01:
            frames[f] = ()
            continue
        frames[f] = tuple(tid for tid, sa, sb in selected if sa <= f <= sb and rng.random() < 0.995)
    return tracklets, frames
