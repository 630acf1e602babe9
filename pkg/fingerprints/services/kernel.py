# fingerprints/services/kernel.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist
from sklearn.neighbors import KDTree

from fingerprints.services.core import (
    MISSING_DBM,
    MISSING_EPSILON,
    MAX_DBM,
    Fingerprint,
    FeatureId,
    GlobalFeatureRegistry,
    LabeledFingerprint,
    Location,
    is_measurable,
)
from fingerprints.services.errors import InvalidInputError, NumericalError
from fingerprints.services.parallel import ordered_map

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class KernelParams:
    """
    Matérn ν=3/2 kernel smoothing parameters.

    `prior_mean` is the value predictions relax to away from the data and in the
    ridge limit; the missing indicator by default, 0 for the textbook form.
    """
    length_scale: float = 1.0
    amplitude: float = 1.0
    reg: float = 1.0
    prior_mean: float = MISSING_DBM
    literal_normal_equations: bool = False

    def __post_init__(self) -> None:
        if not self.length_scale > 0:
            raise InvalidInputError(f"length_scale must be > 0, got {self.length_scale}.")
        if not self.amplitude > 0:
            raise InvalidInputError(f"amplitude must be > 0, got {self.amplitude}.")
        if not self.reg >= 0:
            raise InvalidInputError(f"reg must be >= 0, got {self.reg}.")


@dataclass(frozen=True)
class QueryConfig:
    """Query-radius variant: only reference points within scale · length_scale are used."""
    scale: float = 5.0

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise InvalidInputError(f"query scale must be > 0, got {self.scale}.")

    def radius(self, params: KernelParams) -> float:
        return self.scale * params.length_scale


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned region of interest in meters."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def is_empty(self) -> bool:
        return not (self.width > 0 and self.height > 0)

    def expanded(self, margin: float) -> "Bounds":
        return Bounds(self.xmin - margin, self.ymin - margin, self.xmax + margin, self.ymax + margin)

    def contains(self, loc: Location) -> bool:
        x, y = loc
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @classmethod
    def from_points(cls, points: np.ndarray, margin: float = 0.0) -> "Bounds":
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if points.shape[0] == 0:
            raise InvalidInputError("Cannot derive bounds from zero points.")
        lo = points.min(axis=0) - margin
        hi = points.max(axis=0) + margin
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def matern32(d: Union[float, np.ndarray], params: KernelParams) -> Union[float, np.ndarray]:
    """σ_k² · (1 + √3·d/ℓ) · exp(−√3·d/ℓ)."""
    scaled = SQRT3 * np.asarray(d, dtype=float) / params.length_scale
    value = params.amplitude ** 2 * (1.0 + scaled) * np.exp(-scaled)
    if np.ndim(value) == 0:
        return float(value)
    return value


class RfmTrainingSet:
    """
    Labeled reference fingerprints with their registry and spatial index.

    Read-only after construction. `feature_support` caches, per feature and
    coverage radius, which reference points take part in that feature's regression.
    """

    def __init__(
        self,
        samples: Sequence[LabeledFingerprint],
        registry: Optional[GlobalFeatureRegistry] = None,
    ) -> None:
        self.samples: Tuple[LabeledFingerprint, ...] = tuple(samples)
        if not self.samples:
            raise InvalidInputError("A training set needs at least one labeled fingerprint.")
        if registry is None:
            registry = GlobalFeatureRegistry.from_fingerprints(s.fingerprint for s in self.samples)
        self.registry = registry

        self.locations = np.array([s.location for s in self.samples], dtype=float).reshape(-1, 2)
        self._values = np.full((len(self.samples), len(registry)), np.nan)
        for row, sample in enumerate(self.samples):
            for feature, value in sample.fingerprint.entries.items():
                column = registry.get_index(feature)
                if column is None:
                    raise InvalidInputError(f"Feature '{feature}' is missing from the registry.")
                self._values[row, column] = value
        self._measured = ~np.isnan(self._values)
        self._tree = KDTree(self.locations)
        self._support_cache: Dict[Tuple[FeatureId, Optional[float]], Tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def bounds(self) -> Bounds:
        return Bounds.from_points(self.locations)

    def measured_indices(self, feature: FeatureId) -> np.ndarray:
        column = self.registry.get_index(feature)
        if column is None:
            return np.empty(0, dtype=int)
        return np.flatnonzero(self._measured[:, column])

    def ball(self, loc: Location, radius: float) -> np.ndarray:
        """Indices of reference points within `radius` of `loc`, ascending."""
        found = self._tree.query_radius(np.asarray([loc], dtype=float), r=radius)[0]
        return np.sort(found)

    def feature_support(
        self,
        feature: FeatureId,
        coverage_radius: Optional[float] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        (mask, values) over all reference points for one feature's regression.

        Points that measured the feature contribute their value. With a coverage
        radius, points that did not measure it contribute the missing indicator when
        they lie within that radius of a point that did.
        """
        key = (feature, coverage_radius)
        cached = self._support_cache.get(key)
        if cached is not None:
            return cached

        n = len(self.samples)
        column = self.registry.get_index(feature)
        if column is None:
            mask = np.zeros(n, dtype=bool)
            values = np.full(n, MISSING_DBM)
        else:
            mask = self._measured[:, column].copy()
            values = np.where(mask, self._values[:, column], MISSING_DBM)
            if coverage_radius is not None and mask.any():
                neighbours = self._tree.query_radius(self.locations[mask], r=coverage_radius)
                covered = np.zeros(n, dtype=bool)
                for found in neighbours:
                    covered[found] = True
                mask = mask | covered
        self._support_cache[key] = (mask, values)
        return mask, values


def _has_duplicate_locations(locations: np.ndarray) -> bool:
    return np.unique(locations, axis=0).shape[0] < locations.shape[0]


def _solve_at(
    train_locations: np.ndarray,
    train_values: np.ndarray,
    loc: Location,
    params: KernelParams,
) -> float:
    """m + z'(G + σ²I)^{-1}(o − m), or the G'G normal-equation form when configured."""
    gram = matern32(cdist(train_locations, train_locations), params)
    if params.literal_normal_equations:
        system = gram.T @ gram
    else:
        system = gram
    system = system + params.reg * np.eye(len(train_values))

    if params.reg == 0 and _has_duplicate_locations(train_locations):
        raise NumericalError(
            "Kernel system is singular (duplicated reference locations with zero "
            "regularization). Use KERNEL_REG > 0."
        )
    try:
        factor = cho_factor(system, lower=True, check_finite=False)
        weights = cho_solve(factor, train_values - params.prior_mean, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(
            f"Kernel system could not be factorized ({exc}). Use KERNEL_REG > 0."
        ) from exc

    offsets = train_locations - np.asarray(loc, dtype=float)
    z = matern32(np.hypot(offsets[:, 0], offsets[:, 1]), params)
    return params.prior_mean + float(z @ weights)


def _clip(value: float) -> float:
    return float(min(max(value, MISSING_DBM), MAX_DBM))


def ks_predict(
    loc: Location,
    feature: FeatureId,
    training: RfmTrainingSet,
    params: KernelParams,
    coverage_radius: Optional[float] = None,
) -> float:
    """Kernel-smoothed prediction of one feature at `loc` using its whole support."""
    mask, values = training.feature_support(feature, coverage_radius)
    selected = np.flatnonzero(mask)
    if selected.size == 0:
        raise InvalidInputError(f"No reference point measured feature '{feature}'.")
    return _clip(_solve_at(training.locations[selected], values[selected], loc, params))


def ks_predict_query(
    loc: Location,
    feature: FeatureId,
    training: RfmTrainingSet,
    params: KernelParams,
    query: QueryConfig,
) -> float:
    """
    ks_predict restricted to reference points within r^KS of `loc`.

    Returns the missing indicator when no supporting point is in range.
    """
    radius = query.radius(params)
    mask, values = training.feature_support(feature, radius)
    ball = training.ball(loc, radius)
    selected = ball[mask[ball]]
    if selected.size == 0:
        return MISSING_DBM
    return _clip(_solve_at(training.locations[selected], values[selected], loc, params))


def predict_fingerprint(
    loc: Location,
    training: RfmTrainingSet,
    params: KernelParams,
    query: QueryConfig,
    features: Optional[Iterable[FeatureId]] = None,
) -> Fingerprint:
    """Query-radius predictions for `features` (default: the whole registry), missing ones left out."""
    radius = query.radius(params)
    ball = training.ball(loc, radius)
    entries: Dict[FeatureId, float] = {}
    for feature in (training.registry if features is None else features):
        if ball.size == 0:
            break
        mask, values = training.feature_support(feature, radius)
        selected = ball[mask[ball]]
        if selected.size == 0:
            continue
        value = _clip(_solve_at(training.locations[selected], values[selected], loc, params))
        if is_measurable(value):
            entries[feature] = value
    return Fingerprint(entries)


def smooth_dataset(
    data: RfmTrainingSet,
    params: KernelParams,
    query: QueryConfig,
    *,
    workers: int = 1,
) -> RfmTrainingSet:
    """
    Replace every reference value by its kernel-smoothed prediction at the same location.

    Key sets are kept, except features whose prediction falls to the missing indicator.
    """
    def smooth(sample: LabeledFingerprint) -> LabeledFingerprint:
        smoothed = predict_fingerprint(
            sample.location, data, params, query, features=tuple(sample.fingerprint),
        )
        return LabeledFingerprint(
            location=sample.location,
            fingerprint=smoothed,
            timestamp=sample.timestamp,
            block=sample.block,
        )

    smoothed_samples = ordered_map(smooth, data.samples, workers)
    dropped = sum(len(a.fingerprint) - len(b.fingerprint) for a, b in zip(data.samples, smoothed_samples))
    if dropped:
        logger.info("Smoothing dropped %d feature reading(s) predicted at the missing indicator.", dropped)
    return RfmTrainingSet(smoothed_samples, registry=data.registry)


@dataclass(frozen=True, eq=False)
class RfmGrid:
    """
    Grid-interpolated RFM: one predicted fingerprint per cell.

    Cells are row-major (index = iy · nx + ix) with centers at
    (xmin + (ix + ½)·spacing, ymin + (iy + ½)·spacing). `values` is a float32
    cell × feature matrix holding the missing indicator for unmeasurable entries.
    """
    bounds: Bounds
    spacing: float
    nx: int
    ny: int
    registry: GlobalFeatureRegistry
    values: np.ndarray
    centers: np.ndarray = field(init=False, repr=False)
    measurable: np.ndarray = field(init=False, repr=False)
    dense: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise InvalidInputError(f"Grid spacing must be > 0, got {self.spacing}.")
        values = np.asarray(self.values, dtype=np.float32)
        expected_shape = (self.nx * self.ny, len(self.registry))
        if values.shape != expected_shape:
            raise InvalidInputError(f"Grid values have shape {values.shape}, expected {expected_shape}.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "centers", grid_centers(self.bounds, self.spacing, self.nx, self.ny))
        object.__setattr__(self, "measurable", values > MISSING_DBM + MISSING_EPSILON)
        dense = values.astype(np.float64)
        dense.setflags(write=False)
        object.__setattr__(self, "dense", dense)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_fingerprint(self, cell: int) -> Fingerprint:
        row = self.values[cell]
        keep = np.flatnonzero(self.measurable[cell])
        return Fingerprint({self.registry.features[j]: float(row[j]) for j in keep})

    def nearest_cell(self, loc: Location) -> int:
        x, y = loc
        ix = int(np.clip(math.floor((x - self.bounds.xmin) / self.spacing), 0, self.nx - 1))
        iy = int(np.clip(math.floor((y - self.bounds.ymin) / self.spacing), 0, self.ny - 1))
        return iy * self.nx + ix

    def fingerprint_at(self, loc: Location) -> Fingerprint:
        return self.cell_fingerprint(self.nearest_cell(loc))


def grid_shape(bounds: Bounds, spacing: float) -> Tuple[int, int]:
    # A tiny tolerance keeps exact multiples of the spacing from gaining a sliver cell.
    nx = max(1, math.ceil(bounds.width / spacing - 1e-9))
    ny = max(1, math.ceil(bounds.height / spacing - 1e-9))
    return nx, ny


def grid_centers(bounds: Bounds, spacing: float, nx: int, ny: int) -> np.ndarray:
    xs = bounds.xmin + (np.arange(nx) + 0.5) * spacing
    ys = bounds.ymin + (np.arange(ny) + 0.5) * spacing
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.column_stack([grid_x.ravel(), grid_y.ravel()])


def interpolate_grid(
    training: RfmTrainingSet,
    roi: Bounds,
    params: KernelParams,
    query: QueryConfig,
    spacing: float = 0.5,
    *,
    workers: int = 1,
) -> RfmGrid:
    """Predict every registry feature at every cell center of the ROI."""
    if roi.is_empty():
        raise InvalidInputError(f"Region of interest {roi} is empty.")
    if not spacing > 0:
        raise InvalidInputError(f"Grid spacing must be > 0, got {spacing}.")
    nx, ny = grid_shape(roi, spacing)
    centers = grid_centers(roi, spacing, nx, ny)
    registry = training.registry

    def predict_cell(center: np.ndarray) -> np.ndarray:
        row = np.full(len(registry), MISSING_DBM)
        fp = predict_fingerprint((float(center[0]), float(center[1])), training, params, query)
        for feature, value in fp.entries.items():
            row[registry.index(feature)] = value
        return row

    logger.info("Interpolating %d x %d grid (%d features).", nx, ny, len(registry))
    rows = ordered_map(predict_cell, list(centers), workers)
    values = np.vstack(rows) if rows else np.empty((0, len(registry)))
    return RfmGrid(bounds=roi, spacing=spacing, nx=nx, ny=ny, registry=registry, values=values)


def expected_fingerprint(
    loc: Location,
    rfm: Union[RfmTrainingSet, RfmGrid],
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
) -> Fingerprint:
    """
    Expected measurement at `loc`: nearest-cell lookup on a grid, query-radius
    kernel smoothing on a training set.
    """
    if isinstance(rfm, RfmGrid):
        return rfm.fingerprint_at(loc)
    if params is None or query is None:
        raise InvalidInputError("Continuous expected fingerprints need kernel and query parameters.")
    return predict_fingerprint(loc, rfm, params, query)
