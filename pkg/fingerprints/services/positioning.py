# fingerprints/services/positioning.py

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from fingerprints.services.core import (
    CDM_EMPTY_PENALTY_DBM,
    MISSING_DBM,
    Fingerprint,
    FeatureId,
    Location,
)
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.kernel import RfmGrid

logger = logging.getLogger(__name__)


class Dissimilarity(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    CDM = "cdm"


@dataclass(frozen=True)
class PositioningConfig:
    k: int = 3
    dissimilarity: Dissimilarity = Dissimilarity.CDM
    lambda_cdm: float = 3.0
    missing_value: float = MISSING_DBM
    weighted: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "dissimilarity", Dissimilarity(self.dissimilarity))
        if int(self.k) < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}.")
        if self.lambda_cdm < 0:
            raise InvalidInputError(f"lambda_cdm must be non-negative, got {self.lambda_cdm}.")


@dataclass(frozen=True)
class PositionEstimate:
    """Estimated location plus the neighbor cells it was averaged from."""
    location: Location
    neighbors: Tuple[int, ...] = ()
    dissimilarities: Tuple[float, ...] = ()


def _query_columns(fp: Fingerprint, grid: RfmGrid) -> Tuple[np.ndarray, np.ndarray, int]:
    """Registry columns and values of the query's features, plus the count outside the registry."""
    columns, values = [], []
    outside = 0
    for feature, value in fp.entries.items():
        column = grid.registry.get_index(feature)
        if column is None:
            outside += 1
            continue
        columns.append(column)
        values.append(value)
    return np.asarray(columns, dtype=int), np.asarray(values, dtype=float), outside


def euclidean_dissimilarities(
    fp: Fingerprint,
    grid: RfmGrid,
    missing_value: float = MISSING_DBM,
    columns: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    L2 distance between the vectorized query and every cell, over `columns`
    (default: every registry dimension). Unmeasured entries read as `missing_value`.
    """
    query = np.full(len(grid.registry), float(missing_value))
    q_columns, q_values, outside = _query_columns(fp, grid)
    if outside:
        logger.warning("Euclidean matching ignores %d feature(s) absent from the RFM.", outside)
    query[q_columns] = q_values
    cells = np.where(grid.measurable, grid.dense, float(missing_value))
    if columns is not None:
        query = query[columns]
        cells = cells[:, columns]
    return np.sqrt(np.sum((cells - query) ** 2, axis=1))


def cdm_dissimilarities(
    fp: Fingerprint,
    grid: RfmGrid,
    lambda_cdm: float,
    columns: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    CDM between the query and every cell fingerprint, computed over the whole grid at once.

    With `columns` given, cells only count the features in those registry columns.
    """
    # features outside the registry are never shared but still count in len(fp)
    q_columns, q_values, _ = _query_columns(fp, grid)
    measured = grid.measurable[:, q_columns]
    shared = measured.sum(axis=1)
    gap_sum = np.sum(np.abs(grid.dense[:, q_columns] - q_values) * measured, axis=1)
    cell_measurable = grid.measurable if columns is None else grid.measurable[:, columns]
    union = len(fp) + cell_measurable.sum(axis=1) - shared
    mismatch = union - shared
    penalty = np.where(shared > 0, gap_sum / np.maximum(shared, 1), CDM_EMPTY_PENALTY_DBM)
    return (gap_sum + lambda_cdm * penalty * mismatch) / union


def _estimate(distances: np.ndarray, grid: RfmGrid, cfg: PositioningConfig) -> PositionEstimate:
    # stable sort: equal dissimilarities keep ascending cell order
    order = np.argsort(distances, kind="stable")[: cfg.k]
    centers = grid.centers[order]
    if cfg.weighted:
        weights = 1.0 / (distances[order] + 1e-9)
        location = (weights[:, None] * centers).sum(axis=0) / weights.sum()
    else:
        location = centers.mean(axis=0)
    return PositionEstimate(
        location=(float(location[0]), float(location[1])),
        neighbors=tuple(int(i) for i in order),
        dissimilarities=tuple(float(distances[i]) for i in order),
    )


def _check(fp: Fingerprint, grid: RfmGrid, cfg: PositioningConfig) -> None:
    if len(fp) == 0:
        raise InvalidInputError("Cannot localize an empty fingerprint.")
    if grid.n_cells == 0:
        raise InvalidInputError("Cannot localize against an empty grid.")
    if cfg.k > grid.n_cells:
        raise InvalidInputError(f"k={cfg.k} exceeds the {grid.n_cells} grid cells.")


def knn_locate(fp: Fingerprint, grid: RfmGrid, cfg: PositioningConfig) -> PositionEstimate:
    """Mean location of the k cells least dissimilar to `fp`."""
    return knn_locate_dropout(fp, (), grid, cfg)


def knn_locate_dropout(
    fp: Fingerprint,
    excluded: Iterable[FeatureId],
    grid: RfmGrid,
    cfg: PositioningConfig,
) -> PositionEstimate:
    """
    kNN with the `excluded` features left out of the comparison entirely.

    The excluded registry dimensions are removed from both the query and the
    cell fingerprints: euclidean mode does not fill them with the missing
    indicator and CDM does not count them as mismatches of the cells.
    """
    excluded = frozenset(excluded)
    if len(fp) > 0 and excluded >= fp.keys():
        raise InvalidInputError("Every measured feature was excluded; nothing left to match.")
    reduced = fp.without(excluded) if excluded else fp
    _check(reduced, grid, cfg)

    columns = None
    if excluded:
        columns = np.asarray(
            [j for j, feature in enumerate(grid.registry) if feature not in excluded],
            dtype=int,
        )
    if cfg.dissimilarity is Dissimilarity.CDM:
        distances = cdm_dissimilarities(reduced, grid, cfg.lambda_cdm, columns)
    else:
        distances = euclidean_dissimilarities(reduced, grid, cfg.missing_value, columns)
    return _estimate(distances, grid, cfg)
