# experiments/services/simulation.py

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

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
    Bounds,
    KernelParams,
    QueryConfig,
    RfmTrainingSet,
    predict_fingerprint,
)
from fingerprints.services.parallel import ordered_map

logger = logging.getLogger(__name__)

STABLE = "stable"
CHANGED = "changed"
KIND_MISSING = "missing"
KIND_SHIFTED = "shifted"

# Sub-stream ids for default_rng([seed, stream, ...]).
ACCESS_POINT_STREAM = 10
SHADOWING_STREAM = 11
SPLIT_STREAM = 12
INJECTION_STREAM = 13

ALLOWED_SHIFTS_DBM = (-15, -10, -5, 5, 10, 15)
GRID_RATIOS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class PropagationScenario:
    """
    Log-distance path-loss world: access points in a rectangular ROI, a regular
    survey grid, Gaussian shadowing and a receiver sensitivity cutoff.
    """
    n_aps: int = 60
    width: float = 30.0
    height: float = 20.0
    exponent: float = 3.0
    ref_power: float = -40.0
    shadowing: float = 2.0
    spacing: float = 1.0
    sensitivity: float = -80.0
    train_fraction: float = 0.75
    seed: int = 0
    ap_positions: Optional[Tuple[Location, ...]] = None

    def __post_init__(self) -> None:
        if not self.exponent > 0:
            raise InvalidInputError(f"Path-loss exponent must be > 0, got {self.exponent}.")
        if self.shadowing < 0:
            raise InvalidInputError(f"Shadowing sigma must be >= 0, got {self.shadowing}.")
        if not (self.width > 0 and self.height > 0):
            raise InvalidInputError("Scenario ROI must have positive width and height.")
        if not self.spacing > 0:
            raise InvalidInputError(f"Survey spacing must be > 0, got {self.spacing}.")
        if not 0 < self.train_fraction < 1:
            raise InvalidInputError(f"train_fraction must lie in (0, 1), got {self.train_fraction}.")
        if self.ap_positions is not None:
            object.__setattr__(
                self, "ap_positions", tuple((float(x), float(y)) for x, y in self.ap_positions),
            )

    @property
    def bounds(self) -> Bounds:
        return Bounds(0.0, 0.0, self.width, self.height)

    def access_points(self) -> np.ndarray:
        if self.ap_positions is not None:
            positions = np.asarray(self.ap_positions, dtype=float).reshape(-1, 2)
        else:
            rng = np.random.default_rng([int(self.seed), ACCESS_POINT_STREAM])
            positions = rng.uniform((0.0, 0.0), (self.width, self.height), size=(int(self.n_aps), 2))
        if positions.shape[0] == 0:
            raise InvalidInputError("A scenario needs at least one access point.")
        return positions

    def survey_points(self) -> np.ndarray:
        xs = np.arange(0.5 * self.spacing, self.width, self.spacing)
        ys = np.arange(0.5 * self.spacing, self.height, self.spacing)
        grid_x, grid_y = np.meshgrid(xs, ys)
        return np.column_stack([grid_x.ravel(), grid_y.ravel()])


def access_point_id(index: int) -> FeatureId:
    return f"02:00:00:00:00:{index:02x}"


def path_loss_rss(distance: np.ndarray, ref_power: float, exponent: float) -> np.ndarray:
    """Noise-free RSS; distances below 1 m read as 1 m."""
    return ref_power - 10.0 * exponent * np.log10(np.maximum(distance, 1.0))


class ScenarioData(NamedTuple):
    training: RfmTrainingSet
    validation: RfmTrainingSet
    access_points: np.ndarray


def generate_scenario(scenario: PropagationScenario) -> ScenarioData:
    """Survey the scenario at every grid point and split the result into training and validation."""
    aps = scenario.access_points()
    points = scenario.survey_points()
    features = [access_point_id(i) for i in range(aps.shape[0])]

    samples: List[LabeledFingerprint] = []
    for index, point in enumerate(points):
        distances = np.hypot(aps[:, 0] - point[0], aps[:, 1] - point[1])
        rss = path_loss_rss(distances, scenario.ref_power, scenario.exponent)
        if scenario.shadowing > 0:
            rng = np.random.default_rng([int(scenario.seed), SHADOWING_STREAM, index])
            rss = rss + rng.normal(0.0, scenario.shadowing, size=rss.shape)
        rss = np.clip(rss, MISSING_DBM, MAX_DBM)
        entries = {
            feature: float(value)
            for feature, value in zip(features, rss)
            if value >= scenario.sensitivity and value > MISSING_DBM
        }
        if not entries:
            logger.warning("Survey point (%.2f, %.2f) hears no access point; skipped.", *point)
            continue
        samples.append(LabeledFingerprint(location=(float(point[0]), float(point[1])),
                                          fingerprint=Fingerprint(entries), block=1))

    if len(samples) < 2:
        raise InvalidInputError("Scenario produced fewer than two usable survey points.")
    order = np.random.default_rng([int(scenario.seed), SPLIT_STREAM]).permutation(len(samples))
    n_train = min(len(samples) - 1, max(1, int(round(scenario.train_fraction * len(samples)))))
    train_idx = np.sort(order[:n_train])
    valid_idx = np.sort(order[n_train:])
    logger.info(
        "Generated %d survey points (%d training, %d validation) from %d access points.",
        len(samples), n_train, len(samples) - n_train, aps.shape[0],
    )
    return ScenarioData(
        training=RfmTrainingSet([samples[i] for i in train_idx]),
        validation=RfmTrainingSet([samples[i] for i in valid_idx]),
        access_points=aps,
    )


@dataclass(frozen=True)
class ChangeSpec:
    """
    One injection setting: the share of features made missing, the share shifted
    and the shift itself. The two shares add up to at most one half.
    """
    missing_ratio: float = 0.0
    shift_ratio: float = 0.0
    shift_dbm: int = -15
    seed: int = 0
    redraw_per_sample: bool = True

    def __post_init__(self) -> None:
        for name in ("missing_ratio", "shift_ratio"):
            value = getattr(self, name)
            if not 0 <= value <= 0.5:
                raise InvalidInputError(f"{name} must lie in [0, 0.5], got {value}.")
        if self.missing_ratio + self.shift_ratio > 0.5 + 1e-12:
            raise InvalidInputError(
                f"missing_ratio + shift_ratio must be <= 0.5, got "
                f"{self.missing_ratio} + {self.shift_ratio}."
            )
        if int(self.shift_dbm) not in ALLOWED_SHIFTS_DBM:
            raise InvalidInputError(f"shift_dbm must be one of {ALLOWED_SHIFTS_DBM}, got {self.shift_dbm}.")
        object.__setattr__(self, "shift_dbm", int(self.shift_dbm))

    @property
    def tag(self) -> str:
        missing = int(round(self.missing_ratio * 100))
        shifted = int(round(self.shift_ratio * 100))
        return f"m{missing:02d}_s{shifted:02d}_d{self.shift_dbm:+d}"

    def counts(self, n_features: int) -> Tuple[int, int]:
        n_missing = min(n_features, math.ceil(round(self.missing_ratio * n_features, 9)))
        n_shift = min(n_features - n_missing, math.ceil(round(self.shift_ratio * n_features, 9)))
        return n_missing, n_shift


@dataclass(frozen=True)
class ChangeLabels:
    """Ground-truth status of every pre-injection feature, with the kind of change applied."""
    status: Mapping[FeatureId, str] = field(default_factory=dict)
    kind: Mapping[FeatureId, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", MappingProxyType(dict(sorted(self.status.items()))))
        object.__setattr__(self, "kind", MappingProxyType(dict(sorted(self.kind.items()))))

    def __len__(self) -> int:
        return len(self.status)

    def keys(self) -> frozenset:
        return frozenset(self.status)

    def changed(self) -> frozenset:
        return frozenset(k for k, s in self.status.items() if s == CHANGED)

    def is_changed(self, feature: FeatureId) -> bool:
        return self.status[feature] == CHANGED


def _injection_order(keys: List[FeatureId], spec: ChangeSpec, draw_index: int) -> List[FeatureId]:
    if spec.redraw_per_sample:
        rng = np.random.default_rng([int(spec.seed), INJECTION_STREAM, int(draw_index)])
        return [keys[i] for i in rng.permutation(len(keys))]
    # same priority in every sample, so a feature changes wherever it is heard
    return sorted(keys, key=lambda f: (zlib.crc32(f"{spec.seed}:{f}".encode("utf-8")), f))


def inject_changes(
    fp: Fingerprint,
    spec: ChangeSpec,
    draw_index: int,
) -> Tuple[Fingerprint, ChangeLabels]:
    """
    Remove ⌈m·n⌉ features and shift a disjoint ⌈s·n⌉ set by `spec.shift_dbm`.

    Shifted values are clipped to [-110, 0]; one landing on the missing indicator is
    removed as well and recorded with kind "missing".
    """
    keys = sorted(fp)
    n_missing, n_shift = spec.counts(len(keys))
    ranked = _injection_order(keys, spec, draw_index)
    missing = set(ranked[:n_missing])
    shifted = set(ranked[n_missing:n_missing + n_shift])

    entries: Dict[FeatureId, float] = {}
    status: Dict[FeatureId, str] = {}
    kind: Dict[FeatureId, str] = {}
    for feature, value in fp.entries.items():
        if feature in missing:
            status[feature], kind[feature] = CHANGED, KIND_MISSING
            continue
        if feature in shifted:
            status[feature] = CHANGED
            moved = min(max(value + spec.shift_dbm, MISSING_DBM), MAX_DBM)
            if moved <= MISSING_DBM:
                kind[feature] = KIND_MISSING
                continue
            kind[feature] = KIND_SHIFTED
            entries[feature] = moved
            continue
        status[feature] = STABLE
        entries[feature] = value
    return Fingerprint(entries), ChangeLabels(status=status, kind=kind)


class InjectedQuery(NamedTuple):
    sample_id: int
    location: Location
    fingerprint: Fingerprint
    labels: ChangeLabels


def inject_dataset(samples: Sequence[LabeledFingerprint], spec: ChangeSpec) -> List[InjectedQuery]:
    """Inject changes into every sample, draw index = sample position."""
    queries = []
    for index, sample in enumerate(samples):
        fingerprint, labels = inject_changes(sample.fingerprint, spec, index)
        if len(fingerprint) == 0:
            logger.warning("Sample %d lost every feature under %s; skipped.", index, spec.tag)
            continue
        queries.append(InjectedQuery(index, sample.location, fingerprint, labels))
    return queries


def change_grid(seed: int = 0, redraw_per_sample: bool = True) -> List[ChangeSpec]:
    """Every (missing, shift, dBm) setting with ratios in 10 % steps summing to at most 50 %."""
    specs = []
    for missing in GRID_RATIOS:
        for shift in GRID_RATIOS:
            if missing + shift > 0.5 + 1e-9:
                continue
            for shift_dbm in ALLOWED_SHIFTS_DBM:
                specs.append(ChangeSpec(missing, shift, shift_dbm, seed, redraw_per_sample))
    return specs


def smooth_validation(
    validation: Iterable[LabeledFingerprint],
    training: RfmTrainingSet,
    params: KernelParams,
    query: QueryConfig,
    *,
    workers: int = 1,
) -> List[LabeledFingerprint]:
    """
    Replace every validation fingerprint by the training-set prediction at its location.
    The result is the no-change baseline that changes are injected into.
    """
    def smooth(sample: LabeledFingerprint) -> LabeledFingerprint:
        return LabeledFingerprint(
            location=sample.location,
            fingerprint=predict_fingerprint(sample.location, training, params, query),
            timestamp=sample.timestamp,
            block=sample.block,
        )

    return ordered_map(smooth, list(validation), workers)
