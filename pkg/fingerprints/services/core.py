# fingerprints/services/core.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from fingerprints.services.errors import InvalidInputError

logger = logging.getLogger(__name__)

# The missing indicator; an unmeasured feature reads as this value wherever a number is needed.
MISSING_DBM = -110.0
MAX_DBM = 0.0

# Predicted values at or below MISSING_DBM + MISSING_EPSILON count as "not measurable".
MISSING_EPSILON = 1.0

# CDM per-feature penalty when two fingerprints share no feature.
CDM_EMPTY_PENALTY_DBM = 10.0

FeatureId = str
Location = Tuple[float, float]


def canonical_feature_id(raw: object) -> FeatureId:
    """Canonical form of a feature identifier: stripped, lower case, non-empty."""
    feature = str(raw).strip().lower()
    if not feature:
        raise InvalidInputError("Feature identifiers must be non-empty.")
    return feature


def normalize_rss(value: float, *, feature: str = "?") -> Optional[float]:
    """
    Bring a raw RSS reading into [-110, 0] dBm.

    Returns None when the reading is not finite or ends up at the missing indicator,
    i.e. the feature is not part of the fingerprint.
    """
    value = float(value)
    if not math.isfinite(value):
        return None
    if value > MAX_DBM:
        logger.warning("RSS %.2f dBm of feature %s is above 0 dBm; clamped to 0.", value, feature)
        value = MAX_DBM
    if value < MISSING_DBM:
        logger.warning(
            "RSS %.2f dBm of feature %s is below the missing indicator; raised to %.0f dBm.",
            value, feature, MISSING_DBM,
        )
        value = MISSING_DBM
    if value <= MISSING_DBM:
        return None
    return value


def is_measurable(value: float) -> bool:
    """True when a predicted value is distinguishable from the missing indicator."""
    return value > MISSING_DBM + MISSING_EPSILON


@dataclass(frozen=True)
class Fingerprint:
    """
    A set of (feature-id, RSS dBm) pairs measured at one location and time.

    Entries are read-only once constructed. Iteration yields feature ids in
    insertion order; `keys()` is the (unordered) set of measured features.
    """
    entries: Mapping[FeatureId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "entries",
            MappingProxyType({str(k): float(v) for k, v in dict(self.entries).items()}),
        )

    @classmethod
    def from_measurements(cls, raw: Mapping[object, float]) -> "Fingerprint":
        """
        Build a fingerprint from raw readings: canonical ids, clamped values,
        missing-indicator readings dropped.
        """
        entries: Dict[FeatureId, float] = {}
        for raw_id, raw_value in raw.items():
            feature = canonical_feature_id(raw_id)
            if feature in entries:
                raise InvalidInputError(f"Feature '{feature}' appears more than once.")
            value = normalize_rss(raw_value, feature=feature)
            if value is not None:
                entries[feature] = value
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[FeatureId]:
        return iter(self.entries)

    def __contains__(self, feature: object) -> bool:
        return feature in self.entries

    def keys(self) -> frozenset:
        return frozenset(self.entries)

    def get(self, feature: FeatureId, default: Optional[float] = None) -> Optional[float]:
        return self.entries.get(feature, default)

    def value_or_missing(self, feature: FeatureId) -> float:
        return self.entries.get(feature, MISSING_DBM)

    def without(self, excluded: Iterable[FeatureId]) -> "Fingerprint":
        excluded = set(excluded)
        return Fingerprint({k: v for k, v in self.entries.items() if k not in excluded})

    def restricted_to(self, keep: Iterable[FeatureId]) -> "Fingerprint":
        keep = set(keep)
        return Fingerprint({k: v for k, v in self.entries.items() if k in keep})


@dataclass(frozen=True)
class LabeledFingerprint:
    """A fingerprint surveyed at a known 2-D location (meters)."""
    location: Location
    fingerprint: Fingerprint
    timestamp: Optional[float] = None
    block: Optional[int] = None

    def __post_init__(self) -> None:
        x, y = (float(c) for c in self.location)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise InvalidInputError(f"Location must be finite, got ({x}, {y}).")
        object.__setattr__(self, "location", (x, y))
        if self.block is not None:
            if int(self.block) < 1:
                raise InvalidInputError(f"Time block index must be >= 1, got {self.block}.")
            object.__setattr__(self, "block", int(self.block))


@dataclass(frozen=True)
class GlobalFeatureRegistry:
    """Ordered set of every feature observed in a dataset, with index lookup."""
    features: Tuple[FeatureId, ...]

    def __post_init__(self) -> None:
        features = tuple(self.features)
        index = {feature: i for i, feature in enumerate(features)}
        if len(index) != len(features):
            raise InvalidInputError("Feature registry contains duplicates.")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_fingerprints(cls, fingerprints: Iterable[Fingerprint]) -> "GlobalFeatureRegistry":
        seen: Dict[FeatureId, None] = {}
        for fp in fingerprints:
            for feature in fp:
                seen.setdefault(feature, None)
        return cls(tuple(seen))

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self) -> Iterator[FeatureId]:
        return iter(self.features)

    def __contains__(self, feature: object) -> bool:
        return feature in self._index

    def index(self, feature: FeatureId) -> int:
        return self._index[feature]

    def get_index(self, feature: FeatureId) -> Optional[int]:
        return self._index.get(feature)


# ---------------------------------------------------------------------------
# Set and vector measures
# ---------------------------------------------------------------------------


def mji(measured: Fingerprint, expected: Fingerprint) -> float:
    """
    Modified Jaccard index of the measured key set A against the expected key set Â:

        ½ (|A ∩ Â| / |A ∪ Â| + |A ∩ Â| / |A|)

    Asymmetric: the second ratio is normalized by the measured set only.
    """
    measured_keys = measured.keys()
    if not measured_keys:
        raise InvalidInputError("MJI needs a non-empty measured fingerprint.")
    expected_keys = expected.keys()
    shared = len(measured_keys & expected_keys)
    union = len(measured_keys | expected_keys)
    return 0.5 * (shared / union + shared / len(measured_keys))


def cdm(fp1: Fingerprint, fp2: Fingerprint, lambda_cdm: float) -> float:
    """
    Coverage-aware dissimilarity between two fingerprints with differing key sets.

        [ Σ_{a ∈ A1∩A2} |v1a − v2a| + λ · p · |A1 △ A2| ] / |A1 ∪ A2|

    where p is the mean absolute gap over the shared features, or 10 dBm when
    nothing is shared. No vectorization, so unmeasured features never enter as values.
    """
    if lambda_cdm < 0:
        raise InvalidInputError(f"lambda_cdm must be non-negative, got {lambda_cdm}.")
    keys1, keys2 = fp1.keys(), fp2.keys()
    union = keys1 | keys2
    if not union:
        raise InvalidInputError("CDM needs at least one non-empty fingerprint.")
    shared = keys1 & keys2
    gaps = [abs(fp1.entries[a] - fp2.entries[a]) for a in sorted(shared)]
    gap_sum = math.fsum(gaps)
    penalty = gap_sum / len(shared) if shared else CDM_EMPTY_PENALTY_DBM
    mismatch = len(union) - len(shared)
    return (gap_sum + lambda_cdm * penalty * mismatch) / len(union)


def measured_order(
    measured: Fingerprint,
    registry: Optional[GlobalFeatureRegistry] = None,
) -> Tuple[FeatureId, ...]:
    """Features of `measured` in registry order; unregistered ones follow in insertion order."""
    if registry is None:
        return tuple(measured)
    registered = sorted(
        (f for f in measured if f in registry),
        key=registry.index,
    )
    return tuple(registered) + tuple(f for f in measured if f not in registry)


def residual_vector(
    measured: Fingerprint,
    expected: Fingerprint,
    registry: Optional[GlobalFeatureRegistry] = None,
) -> np.ndarray:
    """
    Absolute residuals |v_k − ṽ_k| over the measured features.

    Features the expected fingerprint does not predict read as the missing indicator.
    """
    order = measured_order(measured, registry)
    observed = np.array([measured.entries[f] for f in order], dtype=float)
    predicted = np.array([expected.value_or_missing(f) for f in order], dtype=float)
    return np.abs(observed - predicted)


def indicating_value(residuals: Sequence[float], lambda_res: float) -> int:
    """Number of residuals no larger than `lambda_res` (inclusive)."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size == 0:
        raise InvalidInputError("Indicating value needs at least one residual.")
    return int(np.count_nonzero(residuals <= lambda_res))


def vectorize(
    fp: Fingerprint,
    registry: GlobalFeatureRegistry,
    missing_value: float = MISSING_DBM,
) -> np.ndarray:
    """
    Dense vector over the registry; unmeasured positions hold `missing_value`.

    Features outside the registry are dropped and counted in a warning.
    """
    if len(registry) == 0:
        raise InvalidInputError("Cannot vectorize against an empty registry.")
    vector = np.full(len(registry), float(missing_value))
    dropped = 0
    for feature, value in fp.entries.items():
        position = registry.get_index(feature)
        if position is None:
            dropped += 1
            continue
        vector[position] = value
    if dropped:
        logger.warning("vectorize dropped %d feature(s) absent from the registry.", dropped)
    return vector
