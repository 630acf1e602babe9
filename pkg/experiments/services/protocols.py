# experiments/services/protocols.py

from __future__ import annotations

import logging
import math
import time
from dataclasses import replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from experiments.services.metrics import (
    bandwidth_3db,
    bias,
    dispersiveness,
    ecdf_accuracy,
    normalize_per_query,
    roc_auc,
)
from experiments.services.simulation import (
    ChangeLabels,
    ChangeSpec,
    InjectedQuery,
    PropagationScenario,
    inject_dataset,
)
from fingerprints.services.changes import (
    ChangeBeliefSet,
    VariabilityModel,
    detect_changes,
    drop_changed_and_relocate,
)
from fingerprints.services.config import RunConfig
from fingerprints.services.core import FeatureId, Fingerprint, LabeledFingerprint, Location
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.kernel import (
    KernelParams,
    QueryConfig,
    RfmGrid,
    RfmTrainingSet,
    ks_predict,
    ks_predict_query,
)
from fingerprints.services.parallel import ordered_map
from fingerprints.services.positioning import Dissimilarity, PositioningConfig, knn_locate
from fingerprints.services.robust import (
    ResampleConfig,
    intermediate_locations,
    query_seed,
    robust_locate,
)

logger = logging.getLogger(__name__)

Rfm = Union[RfmGrid, RfmTrainingSet]

POSITIONING_METHODS = ("knn_euclidean", "knn_cdm", "robust", "oracle", "dropout")


def sweep_ratios(start: float = 0.05, stop: float = 0.95, step: float = 0.05) -> List[float]:
    """Sampling ratios from `start` to `stop` inclusive."""
    if not (0 < start <= stop <= 1 and step > 0):
        raise InvalidInputError(f"Invalid ratio sweep {start}:{stop}:{step}.")
    count = int(math.floor(round((stop - start) / step, 9))) + 1
    return [round(start + i * step, 10) for i in range(count)]


def scenario_from_config(config: RunConfig) -> PropagationScenario:
    return PropagationScenario(
        n_aps=config["SCENARIO_N_APS"],
        width=config["SCENARIO_WIDTH"],
        height=config["SCENARIO_HEIGHT"],
        exponent=config["SCENARIO_EXPONENT"],
        ref_power=config["SCENARIO_REF_POWER"],
        shadowing=config["SCENARIO_SHADOWING"],
        spacing=config["SCENARIO_SPACING"],
        sensitivity=config["SCENARIO_SENSITIVITY"],
        train_fraction=config["SCENARIO_TRAIN_FRACTION"],
        seed=config.seed,
    )


def change_spec_from_config(config: RunConfig) -> ChangeSpec:
    return ChangeSpec(
        missing_ratio=config["CHANGE_MISSING_RATIO"],
        shift_ratio=config["CHANGE_SHIFT_RATIO"],
        shift_dbm=config["CHANGE_SHIFT_DBM"],
        seed=config.seed,
        redraw_per_sample=config["CHANGE_REDRAW_PER_SAMPLE"],
    )


def ratios_from_config(config: RunConfig) -> List[float]:
    return sweep_ratios(config["SWEEP_RATIO_START"], config["SWEEP_RATIO_STOP"], config["SWEEP_RATIO_STEP"])


# ---------------------------------------------------------------------------
# Sampling-ratio sweep
# ---------------------------------------------------------------------------


class SweepResult(NamedTuple):
    ratios: List[float]
    dispersiveness: np.ndarray
    bias: np.ndarray
    rows: List[Dict[str, float]]
    bandwidths: List[Tuple[float, float, float]]


def run_ratio_sweep(
    queries: Sequence[Tuple[Fingerprint, Location]],
    grid: RfmGrid,
    pos_cfg: PositioningConfig,
    res_cfg: ResampleConfig,
    ratios: Sequence[float],
    *,
    ellipse_scale: float = 1.0,
    workers: int = 1,
) -> SweepResult:
    """
    Dispersiveness and bias of the intermediate locations of every query at every
    sampling ratio, with per-query normalized means and 3 dB bandwidths.
    """
    if not queries:
        raise InvalidInputError("The ratio sweep needs at least one query.")
    if res_cfg.n_res < 2:
        raise InvalidInputError("The ratio sweep needs at least two resamples per query.")
    ratios = list(ratios)

    def sweep_query(item: Tuple[int, Tuple[Fingerprint, Location]]) -> Tuple[List[float], List[float]]:
        index, (fp, truth) = item
        seed = query_seed(res_cfg.seed, index)
        spreads, biases = [], []
        for ratio in ratios:
            cfg = replace(res_cfg, alpha=ratio, seed=seed)
            locations = [e.location for e in intermediate_locations(fp, grid, pos_cfg, cfg)]
            spreads.append(dispersiveness(locations, ellipse_scale))
            biases.append(bias(locations, truth))
        return spreads, biases

    results = ordered_map(sweep_query, list(enumerate(queries)), workers)
    spread = np.array([r[0] for r in results], dtype=float)
    biases = np.array([r[1] for r in results], dtype=float)
    norm_spread = normalize_per_query(spread).mean(axis=0)
    norm_bias = normalize_per_query(biases).mean(axis=0)

    rows = [
        {
            "ratio": ratio,
            "mean_norm_dispersiveness": float(norm_spread[j]),
            "mean_norm_bias": float(norm_bias[j]),
            "mean_dispersiveness": float(spread[:, j].mean()),
            "mean_bias": float(biases[:, j].mean()),
        }
        for j, ratio in enumerate(ratios)
    ]
    bandwidths = []
    if len(ratios) >= 3:
        bandwidths = [bandwidth_3db(dict(zip(ratios, row))) for row in biases]
    return SweepResult(ratios, spread, biases, rows, bandwidths)


# ---------------------------------------------------------------------------
# Positioning and detection runners
# ---------------------------------------------------------------------------


def beliefs_for_labels(beliefs: ChangeBeliefSet, labels: ChangeLabels) -> Dict[FeatureId, float]:
    """
    Beliefs restricted to the labeled features. A labeled feature that is neither
    measured nor expected has no evidence of change and scores 0.
    """
    return {feature: beliefs.beliefs.get(feature, 0.0) for feature in labels.status}


class PositioningReport(NamedTuple):
    rows: List[Dict[str, float]]
    accuracy: Dict[str, float]


def run_positioning_experiment(
    queries: Sequence[InjectedQuery],
    grid: RfmGrid,
    rfm: Rfm,
    pos_cfg: PositioningConfig,
    res_cfg: ResampleConfig,
    model: VariabilityModel,
    *,
    lambda_mji: float = 0.97,
    threshold: float = 0.95,
    radius: float = 2.0,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
    workers: int = 1,
) -> PositioningReport:
    """
    Error of every positioning method on every injected query, and the share of
    queries within `radius` per method.
    """
    if not queries:
        raise InvalidInputError("The positioning experiment needs at least one query.")
    euclidean_cfg = replace(pos_cfg, dissimilarity=Dissimilarity.EUCLIDEAN)
    cdm_cfg = replace(pos_cfg, dissimilarity=Dissimilarity.CDM)

    def run_query(item: Tuple[int, InjectedQuery]) -> Dict[str, float]:
        index, q = item
        cfg = replace(res_cfg, seed=query_seed(res_cfg.seed, index))
        candidates = robust_locate(
            q.fingerprint, grid, rfm, cdm_cfg, cfg, lambda_mji, params=params, query=query,
        )
        beliefs = detect_changes(q.fingerprint, candidates.location, rfm, model, params=params, query=query)
        relocated = drop_changed_and_relocate(
            q.fingerprint, beliefs, grid, cdm_cfg, threshold,
            rfm=rfm, res_cfg=cfg, lambda_mji=lambda_mji, params=params, query=query,
        )
        estimates = {
            "knn_euclidean": knn_locate(q.fingerprint, grid, euclidean_cfg).location,
            "knn_cdm": knn_locate(q.fingerprint, grid, cdm_cfg).location,
            "robust": candidates.location,
            "oracle": candidates.oracle_location(q.location),
            "dropout": relocated.location,
        }
        row: Dict[str, float] = {"sample_id": q.sample_id}
        for method in POSITIONING_METHODS:
            row[f"error_{method}"] = math.dist(estimates[method], q.location)
        return row

    rows = ordered_map(run_query, list(enumerate(queries)), workers)
    accuracy = {
        method: ecdf_accuracy([row[f"error_{method}"] for row in rows], radius)
        for method in POSITIONING_METHODS
    }
    return PositioningReport(rows=rows, accuracy=accuracy)


class DetectionReport(NamedTuple):
    rows: List[Dict[str, float]]
    mean_auc: float


def run_detection_experiment(
    queries: Sequence[InjectedQuery],
    grid: RfmGrid,
    rfm: Rfm,
    pos_cfg: PositioningConfig,
    res_cfg: ResampleConfig,
    model: VariabilityModel,
    *,
    lambda_mji: float = 0.97,
    at_truth: bool = False,
    params: Optional[KernelParams] = None,
    query: Optional[QueryConfig] = None,
    workers: int = 1,
) -> DetectionReport:
    """
    AUC of the change beliefs of every query, evaluated at the robust estimate
    (or at the true location with `at_truth`). Single-class queries have no AUC
    and are left out of the mean.
    """
    def run_query(item: Tuple[int, InjectedQuery]) -> Dict[str, float]:
        index, q = item
        if at_truth:
            location = q.location
        else:
            cfg = replace(res_cfg, seed=query_seed(res_cfg.seed, index))
            location = robust_locate(
                q.fingerprint, grid, rfm, pos_cfg, cfg, lambda_mji, params=params, query=query,
            ).location
        beliefs = detect_changes(q.fingerprint, location, rfm, model, params=params, query=query)
        n_changed = len(q.labels.changed())
        auc = math.nan
        if 0 < n_changed < len(q.labels):
            auc = roc_auc(beliefs_for_labels(beliefs, q.labels), q.labels).auc
        return {"sample_id": q.sample_id, "n_features": len(q.labels), "n_changed": n_changed, "auc": auc}

    rows = ordered_map(run_query, list(enumerate(queries)), workers)
    valid = [row["auc"] for row in rows if not math.isnan(row["auc"])]
    mean_auc = float(np.mean(valid)) if valid else math.nan
    return DetectionReport(rows=rows, mean_auc=mean_auc)


def run_missing_feature_comparison(
    samples: Sequence[LabeledFingerprint],
    grid: RfmGrid,
    pos_cfg: PositioningConfig,
    ratios: Sequence[float] = (0.1, 0.2, 0.3, 0.4, 0.5),
    *,
    seed: int = 0,
    radius: float = 2.0,
) -> List[Dict[str, float]]:
    """Accuracy at `radius` of vector and CDM matching with a growing share of features forced missing."""
    rows = []
    for ratio in ratios:
        spec = ChangeSpec(missing_ratio=ratio, shift_ratio=0.0, seed=seed)
        queries = inject_dataset(samples, spec)
        errors = {}
        for method, dissimilarity in (("euclidean", Dissimilarity.EUCLIDEAN), ("cdm", Dissimilarity.CDM)):
            cfg = replace(pos_cfg, dissimilarity=dissimilarity)
            errors[method] = [math.dist(knn_locate(q.fingerprint, grid, cfg).location, q.location) for q in queries]
        rows.append({
            "missing_ratio": ratio,
            "accuracy_euclidean": ecdf_accuracy(errors["euclidean"], radius),
            "accuracy_cdm": ecdf_accuracy(errors["cdm"], radius),
        })
    return rows


# ---------------------------------------------------------------------------
# Query-radius study
# ---------------------------------------------------------------------------


def full_support_radius(training: RfmTrainingSet) -> float:
    """A coverage radius that pads every reference point: the diagonal of their bounding box."""
    span = np.ptp(training.locations, axis=0)
    return float(math.hypot(span[0], span[1])) * (1.0 + 1e-9) + 1e-9


def radius_study(
    training: RfmTrainingSet,
    params: KernelParams,
    scales: Sequence[float],
    locations: Sequence[Location],
    features: Optional[Sequence[FeatureId]] = None,
) -> List[Dict[str, float]]:
    """
    Mean absolute gap between query-radius predictions and one full-support
    prediction, with wall time, for each radius scale. The full-support reference
    pads every reference point and is computed once for all scales.
    """
    if not locations:
        raise InvalidInputError("The radius study needs at least one location.")
    features = list(training.registry if features is None else features)
    reference_radius = full_support_radius(training)
    full = np.asarray([
        ks_predict(loc, f, training, params, coverage_radius=reference_radius) for loc in locations for f in features
    ])
    rows = []
    for scale in scales:
        query = QueryConfig(scale=scale)
        radius = query.radius(params)
        started = time.perf_counter()
        local = [ks_predict_query(loc, f, training, params, query) for loc in locations for f in features]
        elapsed = time.perf_counter() - started
        gaps = np.abs(np.asarray(local) - full)
        rows.append({
            "scale": float(scale),
            "radius": radius,
            "mae": float(np.mean(gaps)),
            "seconds": elapsed,
        })
    return rows
