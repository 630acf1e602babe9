# fingerprints/services/changes.py

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from fingerprints.services.core import (
    MAX_DBM,
    MISSING_DBM,
    FeatureId,
    Fingerprint,
    LabeledFingerprint,
    Location,
)
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.kernel import (
    KernelParams,
    QueryConfig,
    RfmGrid,
    RfmTrainingSet,
    expected_fingerprint,
)
from fingerprints.services.positioning import (
    PositionEstimate,
    PositioningConfig,
    knn_locate_dropout,
)
from fingerprints.services.robust import ResampleConfig, robust_locate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariabilityModel:
    """RSS standard deviation as a linear function of the RSS level, floored."""
    slope: float = 0.01
    intercept: float = 2.5
    floor: float = 0.5

    def __post_init__(self) -> None:
        if not self.floor > 0:
            raise InvalidInputError(f"Variability floor must be > 0, got {self.floor}.")

    def sigma(self, value: float) -> float:
        return max(self.slope * value + self.intercept, self.floor)


@dataclass(frozen=True)
class ChangeBeliefSet:
    """Per-feature change beliefs in [0, 1], keyed in sorted feature order."""
    beliefs: Mapping[FeatureId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ordered = {k: float(self.beliefs[k]) for k in sorted(self.beliefs)}
        object.__setattr__(self, "beliefs", MappingProxyType(ordered))

    def __len__(self) -> int:
        return len(self.beliefs)

    def __iter__(self) -> Iterator[FeatureId]:
        return iter(self.beliefs)

    def __getitem__(self, feature: FeatureId) -> float:
        return self.beliefs[feature]

    def keys(self) -> frozenset:
        return frozenset(self.beliefs)

    def items(self):
        return self.beliefs.items()

    def flagged(self, threshold: float) -> frozenset:
        return frozenset(k for k, b in self.beliefs.items() if b >= threshold)


def block_points(blocks: Iterable[Sequence[float]]) -> List[Tuple[float, float]]:
    """(median, std) per block of repeated readings; blocks with fewer than 2 readings are skipped."""
    points = []
    skipped = 0
    for values in blocks:
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            skipped += 1
            continue
        points.append((float(np.median(values)), float(np.std(values, ddof=1))))
    if skipped:
        logger.info("Skipped %d block(s) with fewer than two readings.", skipped)
    return points


def fit_variability(
    blocks: Iterable[Sequence[float]],
    floor: float = 0.5,
) -> VariabilityModel:
    """
    Least-squares line of per-block standard deviation against per-block median RSS.

    Each element of `blocks` holds the repeated readings of one feature within one
    time block at one location.
    """
    points = block_points(blocks)
    medians = np.array([p[0] for p in points])
    stds = np.array([p[1] for p in points])
    if np.unique(medians).size < 2:
        raise InvalidInputError(
            "Variability fit needs blocks at two or more distinct RSS levels."
        )
    fit = stats.linregress(medians, stds)
    model = VariabilityModel(slope=float(fit.slope), intercept=float(fit.intercept), floor=floor)
    if model.sigma(MISSING_DBM) <= floor or model.sigma(MAX_DBM) <= floor:
        logger.warning(
            "Fitted variability (slope %.4f, intercept %.3f) hits the %.2f dBm floor inside [-110, 0].",
            model.slope, model.intercept, floor,
        )
    return model


def fit_variability_from_samples(
    samples: Iterable[LabeledFingerprint],
    floor: float = 0.5,
) -> VariabilityModel:
    """Group readings by (location, block, feature) and fit the variability line."""
    groups: Dict[Tuple[Location, Optional[int], FeatureId], List[float]] = defaultdict(list)
    for sample in samples:
        for feature, value in sample.fingerprint.entries.items():
            groups[(sample.location, sample.block, feature)].append(value)
    ordered = [groups[key] for key in sorted(groups, key=lambda k: (k[0], k[1] or 0, k[2]))]
    return fit_variability(ordered, floor=floor)


def gaussian_intersections(mu1: float, sigma1: float, mu2: float, sigma2: float) -> Tuple[float, float]:
    """
    The values v where N(v | mu1, sigma1) = N(v | mu2, sigma2), ascending.

    Equal sigmas give the single midpoint root twice; identical distributions give (mu, mu).
    """
    if not (sigma1 > 0 and sigma2 > 0):
        raise InvalidInputError(f"Standard deviations must be > 0, got {sigma1} and {sigma2}.")
    if sigma1 == sigma2:
        if mu1 == mu2:
            return float(mu1), float(mu1)
        midpoint = 0.5 * (mu1 + mu2)
        return midpoint, midpoint

    var1, var2 = sigma1 * sigma1, sigma2 * sigma2
    a = 0.5 / var1 - 0.5 / var2
    b = mu2 / var2 - mu1 / var1
    c = 0.5 * mu1 * mu1 / var1 - 0.5 * mu2 * mu2 / var2 + math.log(sigma1 / sigma2)
    disc = max(b * b - 4.0 * a * c, 0.0)
    root = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(root, b))
    if q == 0.0:
        v1 = v2 = -b / (2.0 * a)
    else:
        v1, v2 = q / a, c / q
    return (v1, v2) if v1 <= v2 else (v2, v1)


def change_belief(
    v_measured: Optional[float],
    v_expected: Optional[float],
    model: VariabilityModel,
) -> float:
    """
    1 − max density of the expected-value Gaussian at the two points where it meets
    the measured-value Gaussian, clamped to [0, 1]. None means missing (−110 dBm).
    """
    if v_measured is None and v_expected is None:
        raise InvalidInputError("Change belief needs at least one measured or expected value.")
    measured = MISSING_DBM if v_measured is None else float(v_measured)
    expected = MISSING_DBM if v_expected is None else float(v_expected)
    sigma_m, sigma_e = model.sigma(measured), model.sigma(expected)
    if measured == expected and sigma_m == sigma_e:
        return 0.0
    v1, v2 = gaussian_intersections(measured, sigma_m, expected, sigma_e)
    density = stats.norm.pdf([v1, v2], loc=expected, scale=sigma_e).max()
    return float(np.clip(1.0 - density, 0.0, 1.0))


def detect_changes(
    fp: Fingerprint,
    est_loc: Location,
    rfm: Union[RfmGrid, RfmTrainingSet],
    model: VariabilityModel,
    *,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
) -> ChangeBeliefSet:
    """Belief for every feature measured now or expected at `est_loc`."""
    expected = expected_fingerprint(est_loc, rfm, params, query)
    beliefs = {
        feature: change_belief(fp.get(feature), expected.get(feature), model)
        for feature in sorted(fp.keys() | expected.keys())
    }
    return ChangeBeliefSet(beliefs)


def drop_changed_and_relocate(
    fp: Fingerprint,
    beliefs: ChangeBeliefSet,
    grid: RfmGrid,
    pos_cfg: PositioningConfig,
    threshold: float = 0.95,
    *,
    rfm: Optional[Union[RfmGrid, RfmTrainingSet]] = None,
    res_cfg: Optional[ResampleConfig] = None,
    lambda_mji: float = 0.97,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
    workers: int = 1,
) -> PositionEstimate:
    """
    Re-localize with every feature whose belief reaches `threshold` dropped.

    When that leaves nothing to match, the robust estimate is returned instead.
    """
    excluded = beliefs.flagged(threshold)
    if len(fp) > 0 and excluded >= fp.keys():
        logger.warning(
            "All %d measured feature(s) flagged as changed at threshold %.3f; using the robust estimate.",
            len(fp), threshold,
        )
        candidates = robust_locate(
            fp,
            grid,
            grid if rfm is None else rfm,
            pos_cfg,
            res_cfg or ResampleConfig(),
            lambda_mji,
            params=params,
            query=query,
            workers=workers,
        )
        return PositionEstimate(location=candidates.location)
    return knn_locate_dropout(fp, excluded, grid, pos_cfg)
