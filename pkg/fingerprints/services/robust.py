# fingerprints/services/robust.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from fingerprints.services.core import (
    Fingerprint,
    Location,
    indicating_value,
    mji,
    residual_vector,
)
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.kernel import (
    KernelParams,
    QueryConfig,
    RfmGrid,
    RfmTrainingSet,
    expected_fingerprint,
)
from fingerprints.services.parallel import ordered_map
from fingerprints.services.positioning import PositionEstimate, PositioningConfig, knn_locate_dropout

logger = logging.getLogger(__name__)

# Sub-stream ids; resampling draws use default_rng([seed, RESAMPLE_STREAM, draw_index]).
RESAMPLE_STREAM = 1
QUERY_STREAM = 2

Rfm = Union[RfmGrid, RfmTrainingSet]
LocationLike = Union[Location, PositionEstimate]


@dataclass(frozen=True)
class ResampleConfig:
    n_res: int = 200
    alpha: float = 0.55
    min_features: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_res) < 1:
            raise InvalidInputError(f"n_res must be >= 1, got {self.n_res}.")
        if not 0 < self.alpha <= 1:
            raise InvalidInputError(f"Sampling ratio must lie in (0, 1], got {self.alpha}.")
        if int(self.min_features) < 1:
            raise InvalidInputError(f"min_features must be >= 1, got {self.min_features}.")
        if int(self.seed) < 0:
            raise InvalidInputError(f"seed must be non-negative, got {self.seed}.")

    def sample_size(self, n_features: int) -> int:
        # round() first so that e.g. 0.45 * 20 = 9.000000000000002 stays 9
        wanted = math.ceil(round(self.alpha * n_features, 9))
        return min(n_features, max(self.min_features, wanted))


@dataclass(frozen=True)
class CandidateSet:
    """
    Intermediate locations of one query with their scores, the selected
    candidates and the final weighted location.
    """
    locations: Tuple[Location, ...]
    scores: Tuple[float, ...]
    selected: Tuple[int, ...]
    weights: Tuple[float, ...]
    location: Location

    @property
    def k(self) -> int:
        return len(self.selected)

    def oracle_location(self, truth: Location) -> Location:
        """The selected candidate nearest to `truth` (lowest index on ties)."""
        best = min(
            self.selected,
            key=lambda j: (math.dist(self.locations[j], truth), j),
        )
        return self.locations[best]


class MjiSelection(NamedTuple):
    scores: np.ndarray
    selected: Tuple[int, ...]
    weights: np.ndarray


def query_seed(seed: int, query_index: int) -> int:
    """Independent 64-bit resampling seed for the query at `query_index`."""
    sequence = np.random.SeedSequence([int(seed), QUERY_STREAM, int(query_index)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _as_location(item: LocationLike) -> Location:
    if isinstance(item, PositionEstimate):
        return item.location
    return (float(item[0]), float(item[1]))


def resample(fp: Fingerprint, cfg: ResampleConfig, draw_index: int) -> Fingerprint:
    """
    Uniform subset of the measured features: the first draws of a permutation
    keyed by (seed, draw_index). A larger ratio extends the same draw.
    """
    if len(fp) == 0:
        raise InvalidInputError("Cannot resample an empty fingerprint.")
    keys = sorted(fp)
    size = cfg.sample_size(len(keys))
    if size == len(keys):
        return fp
    rng = np.random.default_rng([int(cfg.seed), RESAMPLE_STREAM, int(draw_index)])
    chosen = rng.permutation(len(keys))[:size]
    return fp.restricted_to(keys[i] for i in chosen)


def intermediate_locations(
    fp: Fingerprint,
    grid: RfmGrid,
    pos_cfg: PositioningConfig,
    res_cfg: ResampleConfig,
    *,
    workers: int = 1,
) -> List[PositionEstimate]:
    """
    kNN estimate of every resample, indexed by draw. The measured features a
    draw left out are dropped from the grid side as well.
    """
    def locate_draw(draw_index: int) -> PositionEstimate:
        draw = resample(fp, res_cfg, draw_index)
        return knn_locate_dropout(draw, fp.keys() - draw.keys(), grid, pos_cfg)

    return ordered_map(locate_draw, range(res_cfg.n_res), workers)


def _expected_at(
    locations: Sequence[LocationLike],
    rfm: Rfm,
    params: Optional[KernelParams],
    query: Optional[QueryConfig],
) -> List[Fingerprint]:
    # intermediate locations repeat a lot; predict each distinct one once
    cache: Dict[Location, Fingerprint] = {}
    expected = []
    for item in locations:
        loc = _as_location(item)
        if loc not in cache:
            cache[loc] = expected_fingerprint(loc, rfm, params, query)
        expected.append(cache[loc])
    return expected


def identify_candidates_threshold(
    fp: Fingerprint,
    locations: Sequence[LocationLike],
    rfm: Rfm,
    lambda_res: float,
    *,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
) -> Tuple[int, np.ndarray]:
    """
    Index of the location with the largest indicating value (first one on ties),
    together with every location's indicating value.
    """
    if not locations:
        raise InvalidInputError("No intermediate locations to choose from.")
    registry = rfm.registry
    counts = np.array(
        [
            indicating_value(residual_vector(fp, expected, registry), lambda_res)
            for expected in _expected_at(locations, rfm, params, query)
        ],
        dtype=int,
    )
    return int(np.argmax(counts)), counts


def select_by_mji(scores: Sequence[float], lambda_mji: float) -> Tuple[Tuple[int, ...], np.ndarray]:
    """
    Indices scoring at least lambda_mji · max(scores), with their scores
    normalized to sum 1 (uniform when every selected score is zero).
    """
    if not 0 < lambda_mji <= 1:
        raise InvalidInputError(f"lambda_mji must lie in (0, 1], got {lambda_mji}.")
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise InvalidInputError("No MJI scores to select from.")
    selected = np.flatnonzero(scores >= lambda_mji * scores.max())
    chosen = scores[selected]
    total = chosen.sum()
    if total > 0:
        weights = chosen / total
    else:
        weights = np.full(selected.size, 1.0 / selected.size)
    return tuple(int(j) for j in selected), weights


def identify_candidates_mji(
    fp: Fingerprint,
    locations: Sequence[LocationLike],
    rfm: Rfm,
    lambda_mji: float,
    *,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
) -> MjiSelection:
    if not locations:
        raise InvalidInputError("No intermediate locations to choose from.")
    scores = np.array(
        [mji(fp, expected) for expected in _expected_at(locations, rfm, params, query)],
        dtype=float,
    )
    selected, weights = select_by_mji(scores, lambda_mji)
    return MjiSelection(scores=scores, selected=selected, weights=weights)


def robust_locate(
    fp: Fingerprint,
    grid: RfmGrid,
    rfm: Rfm,
    pos_cfg: PositioningConfig,
    res_cfg: ResampleConfig,
    lambda_mji: float = 0.97,
    *,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
    workers: int = 1,
) -> CandidateSet:
    """
    Resample, localize every resample, keep the MJI-top intermediate locations
    and return their MJI-weighted mean.
    """
    estimates = intermediate_locations(fp, grid, pos_cfg, res_cfg, workers=workers)
    locations = tuple(e.location for e in estimates)
    selection = identify_candidates_mji(fp, locations, rfm, lambda_mji, params=params, query=query)
    points = np.asarray([locations[j] for j in selection.selected], dtype=float)
    final = selection.weights @ points
    logger.debug("Selected %d of %d intermediate locations.", len(selection.selected), len(locations))
    return CandidateSet(
        locations=locations,
        scores=tuple(float(s) for s in selection.scores),
        selected=selection.selected,
        weights=tuple(float(w) for w in selection.weights),
        location=(float(final[0]), float(final[1])),
    )


def robust_locate_threshold(
    fp: Fingerprint,
    grid: RfmGrid,
    rfm: Rfm,
    pos_cfg: PositioningConfig,
    res_cfg: ResampleConfig,
    lambda_res: float = 10.0,
    *,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
    workers: int = 1,
) -> CandidateSet:
    """
    Indicating-value variant: the single intermediate location with the most
    residuals within `lambda_res` dBm wins outright.
    """
    estimates = intermediate_locations(fp, grid, pos_cfg, res_cfg, workers=workers)
    locations = tuple(e.location for e in estimates)
    winner, counts = identify_candidates_threshold(
        fp, locations, rfm, lambda_res, params=params, query=query,
    )
    return CandidateSet(
        locations=locations,
        scores=tuple(float(c) for c in counts),
        selected=(winner,),
        weights=(1.0,),
        location=locations[winner],
    )
