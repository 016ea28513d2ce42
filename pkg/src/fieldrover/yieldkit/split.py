"""Stratified train/val/test splitting at the image level.

Images are binned by ground-truth count so heavily and lightly annotated
images land in every split at the requested proportions. Allocation uses
the largest-remainder rule per stratum, which keeps each split within one
image of its exact share.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from ..errors import InvalidParameter
from .annotations import AnnotatedImage

COUNT_BINS: tuple[tuple[int, float], ...] = ((0, 0), (1, 20), (21, 50), (51, math.inf))


def count_bin(n_boxes: int, bins=COUNT_BINS) -> int:
    for idx, (lo, hi) in enumerate(bins):
        if lo <= n_boxes <= hi:
            return idx
    raise InvalidParameter(f"count {n_boxes} fits no stratum bin")


@dataclass(frozen=True)
class SplitResult:
    train: tuple[AnnotatedImage, ...]
    val: tuple[AnnotatedImage, ...]
    test: tuple[AnnotatedImage, ...]
    stratified: bool  # False when strata were too small and the split degraded

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def _allocate(n: int, ratios: tuple[float, ...]) -> list[int]:
    exact = [n * r for r in ratios]
    sizes = [math.floor(e) for e in exact]
    remainder = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes


def stratified_split(
    images: list[AnnotatedImage],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    bins=COUNT_BINS,
) -> SplitResult:
    """Split images into disjoint train/val/test sets, seeded and stable."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidParameter("ratios must sum to 1")
    if len(images) < 10:
        raise InvalidParameter("need at least 10 images to split")

    strata: dict[int, list[AnnotatedImage]] = {}
    for im in images:
        strata.setdefault(count_bin(len(im.ground_truth), bins), []).append(im)

    stratified = all(len(group) >= len(ratios) for group in strata.values())
    if not stratified:
        strata = {0: list(images)}

    rng = random.Random(seed)
    parts: tuple[list[AnnotatedImage], ...] = ([], [], [])
    for key in sorted(strata):
        group = list(strata[key])
        rng.shuffle(group)
        sizes = _allocate(len(group), ratios)
        pos = 0
        for part, size in zip(parts, sizes):
            part.extend(group[pos : pos + size])
            pos += size
    return SplitResult(
        train=tuple(parts[0]), val=tuple(parts[1]), test=tuple(parts[2]), stratified=stratified
    )
