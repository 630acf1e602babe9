# experiments/services/labeling.py

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.stats import median_abs_deviation

from experiments.services.simulation import CHANGED, STABLE
from fingerprints.services.core import FeatureId, LabeledFingerprint, Location
from fingerprints.services.errors import InvalidInputError

logger = logging.getLogger(__name__)

# Scales the MAD to a standard deviation under normality.
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class BlockStats:
    location: Location
    feature: FeatureId
    block: int
    mu: float
    sigma: float
    count: int


def robust_stats(values: Sequence[float]) -> Tuple[float, float]:
    """(median, 1.4826 · MAD) of the readings."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidInputError("Robust statistics need at least one value.")
    return float(np.median(values)), float(MAD_SCALE * median_abs_deviation(values))


def label_within_block(values: Sequence[float]) -> List[str]:
    """A reading is changed when it deviates from the block median by more than three robust sigmas."""
    mu, sigma = robust_stats(values)
    labels = []
    for value in values:
        if sigma == 0:
            changed = value != mu
        else:
            changed = abs(value - mu) > 3.0 * sigma
        labels.append(CHANGED if changed else STABLE)
    return labels


def inter_block_ratio(mu_i: float, sigma_i: float, mu_j: float, sigma_j: float) -> float:
    """|μ_i − μ_j| / (3·√(σ_i² + σ_j²)); 0/0 reads as 0 and x/0 as infinity."""
    numerator = abs(mu_i - mu_j)
    denominator = 3.0 * math.hypot(sigma_i, sigma_j)
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator


def label_inter_block(stats_i: BlockStats, stats_j: BlockStats) -> str:
    ratio = inter_block_ratio(stats_i.mu, stats_i.sigma, stats_j.mu, stats_j.sigma)
    return CHANGED if ratio >= 1.0 else STABLE


class SampleLabel(NamedTuple):
    sample_index: int
    feature: FeatureId
    value: float
    status: str


class BlockLabel(NamedTuple):
    location: Location
    feature: FeatureId
    block: int
    reference_block: int
    ratio: float
    status: str


class LabelingResult(NamedTuple):
    stats: List[BlockStats]
    samples: List[SampleLabel]
    blocks: List[BlockLabel]


def label_dataset(samples: Sequence[LabeledFingerprint]) -> LabelingResult:
    """
    Label long-term data per location: block statistics for every feature heard
    at that location, per-reading flags within each block, and every block
    compared against the location's first block. Unheard features read as −110 dBm.
    """
    by_location: Dict[Location, Dict[int, List[int]]] = defaultdict(lambda: defaultdict(list))
    for index, sample in enumerate(samples):
        by_location[sample.location][sample.block or 1].append(index)

    stats: List[BlockStats] = []
    sample_labels: List[SampleLabel] = []
    block_labels: List[BlockLabel] = []
    for location in sorted(by_location):
        blocks = by_location[location]
        features = sorted({f for members in blocks.values() for i in members for f in samples[i].fingerprint})
        first = min(blocks)
        for feature in features:
            per_block: Dict[int, BlockStats] = {}
            for block in sorted(blocks):
                members = blocks[block]
                values = [samples[i].fingerprint.value_or_missing(feature) for i in members]
                mu, sigma = robust_stats(values)
                per_block[block] = BlockStats(location, feature, block, mu, sigma, len(values))
                stats.append(per_block[block])
                for i, value, status in zip(members, values, label_within_block(values)):
                    sample_labels.append(SampleLabel(i, feature, value, status))
            reference = per_block[first]
            for block, block_stats in per_block.items():
                ratio = inter_block_ratio(reference.mu, reference.sigma, block_stats.mu, block_stats.sigma)
                status = STABLE if block == first else label_inter_block(reference, block_stats)
                block_labels.append(BlockLabel(location, feature, block, first, ratio, status))

    n_changed = sum(1 for label in block_labels if label.status == CHANGED)
    logger.info(
        "Labeled %d location(s): %d block statistics, %d changed block(s).",
        len(by_location), len(stats), n_changed,
    )
    return LabelingResult(stats=stats, samples=sample_labels, blocks=block_labels)
