"""Mini-batch ADADELTA training of the joint objective."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adcore.optim import AdadeltaState, adadelta_step
from .adcore.tensor import backward, current_graph, zero_grads

log = logging.getLogger(__name__)


@dataclass
class TrainLog:
    steps: list[int] = field(default_factory=list)
    att: list[float] = field(default_factory=list)
    focus: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches, reshuffled every epoch; drops nothing."""
    while True:
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            yield order[s : s + batch_size]


def ink_columns(image: np.ndarray, threshold: float = 0.2) -> tuple[int, int]:
    """First and last column that differ from the image median by more than ``threshold``."""
    cols = np.flatnonzero(np.any(np.abs(image - np.median(image)) > threshold, axis=0))
    if cols.size == 0:
        return 0, image.shape[1] - 1
    return int(cols[0]), int(cols[-1])


def augment_batch(images: np.ndarray, boxes: list, extents: np.ndarray, rng: np.random.Generator,
                  max_shift: int = 3):
    """Label-preserving jitter for one batch.

    Per sample: a horizontal shift of up to ``max_shift`` px that never pushes
    ink out of the frame (``extents`` gives the first and last ink column),
    random polarity inversion, a vertical shift of -1, 0 or +1 px, a random
    contrast scale in [0.6, 1.2] about the mean, a brightness offset in
    [-0.15, 0.15] and Gaussian pixel noise (sigma 0.03), clipped to [0, 1].
    Vacated rows and columns repeat the edge.  ``images`` is N x 1 x H x W;
    returns new images and boxes moved with the shifts.
    """
    out = images.copy()
    new_boxes = []
    n, _, h, w = images.shape
    for i in range(n):
        lo, hi = extents[i]
        s = int(rng.integers(max(-max_shift, -lo), min(max_shift, w - 1 - hi) + 1))
        if s:
            padded = np.pad(out[i, 0], ((0, 0), (max_shift, max_shift)), mode="edge")
            out[i, 0] = padded[:, max_shift - s : max_shift - s + w]
        if rng.random() < 0.5:
            out[i, 0] = 1.0 - out[i, 0]
        b = boxes[i]
        new_boxes.append(None if b is None else [(x0 + s, y0, x1 + s, y1) for x0, y0, x1, y1 in b])
    # photometric pass kept separate so the draw order of the geometric pass is unchanged
    for i in range(n):
        dy = int(rng.integers(-1, 2))
        if dy:
            out[i, 0] = np.pad(out[i, 0], ((1, 1), (0, 0)), mode="edge")[1 - dy : 1 - dy + h]
            if new_boxes[i] is not None:
                new_boxes[i] = [(x0, y0 + dy, x1, y1 + dy) for x0, y0, x1, y1 in new_boxes[i]]
        m = out[i, 0].mean()
        scale = rng.uniform(0.6, 1.2)
        out[i, 0] = np.clip((out[i, 0] - m) * scale + m + rng.uniform(-0.15, 0.15)
                            + rng.normal(0, 0.03, (h, w)), 0.0, 1.0)
    return out, new_boxes


@dataclass
class WeightAverage:
    """Exponential moving average of the parameters, used for evaluation.

    The effective decay after update t is min(decay, (1 + t) / (10 + t)), so
    the average forgets the initialisation quickly early in training.
    """
    decay: float = 0.999
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"average decay must lie in (0, 1), got {self.decay}")

    def update(self, params: dict, step: int) -> None:
        d = min(self.decay, (1.0 + step) / (10.0 + step))
        for name, p in params.items():
            avg = self.values.get(name)
            if avg is None:
                self.values[name] = p.data.copy()
            else:
                avg *= d
                avg += (1.0 - d) * p.data

    def copy_to(self, params: dict) -> None:
        """Overwrite parameter values with their averages (where present)."""
        for name, p in params.items():
            if name in self.values:
                p.data = self.values[name].copy()


def train(model, dataset, lam: float = 0.01, steps: int = 1000, batch_size: int = 32,
          seed: int = 0, state: AdadeltaState | None = None, start_step: int = 0,
          log_every: int = 50, on_step: Callable | None = None, time_limit: float | None = None,
          augment: bool = False, average: WeightAverage | None = None):
    """Train in place; returns (AdadeltaState, TrainLog).

    ``on_step(step, state)`` runs after every update (used for checkpointing).
    Resuming with ``start_step`` replays the batch stream so a resumed run
    sees the same batches as an uninterrupted one; augmentation draws are
    keyed by (seed, step) for the same reason.  ``average``, if given, is
    updated after every step.
    """
    state = state or AdadeltaState()
    params = model.parameters()
    samples = list(dataset)
    images = np.stack([s.image for s in samples])[:, None]
    texts = [s.text for s in samples]
    boxes = [s.boxes if s.annotated else None for s in samples]
    rng = np.random.default_rng(seed)
    stream = batches(len(samples), batch_size, rng)
    extents = None
    if augment:
        extents = np.array([ink_columns(s.image) if s.boxes is None
                            else (min(b[0] for b in s.boxes), max(b[2] for b in s.boxes))
                            for s in samples])
    for _ in range(start_step):
        next(stream)
    history = TrainLog()
    t0 = time.time()
    for step in range(start_step, steps):
        idx = next(stream)
        zero_grads(params.values())
        current_graph().clear()
        batch_img, batch_boxes = images[idx], [boxes[i] for i in idx]
        if augment:
            batch_img, batch_boxes = augment_batch(batch_img, batch_boxes, extents[idx],
                                                   np.random.default_rng([seed, step]))
        total, att, foc = model.loss(batch_img, [texts[i] for i in idx], batch_boxes, lam)
        backward(total, params=params.values())
        adadelta_step(params, state)
        if average is not None:
            average.update(params, step)
        history.steps.append(step)
        history.att.append(att)
        history.focus.append(foc)
        history.total.append(float(total.data))
        if log_every and (step % log_every == 0 or step == steps - 1):
            log.info("step=%d L_att=%.4f L_focus=%.4f L=%.4f elapsed=%.1fs",
                     step, att, foc, float(total.data), time.time() - t0)
        if on_step is not None:
            on_step(step + 1, state)
        if time_limit is not None and time.time() - t0 > time_limit:
            log.warning("time limit reached at step %d", step)
            break
    return state, history
