# experiments/services/reports.py

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from experiments.services.metrics import EcdfCurve, RocCurve, confusion, ecdf, roc_auc
from experiments.services.simulation import CHANGED, STABLE
from fingerprints.services.errors import DatasetParseError, InvalidInputError
from fingerprints.services.storage import BELIEF_COLUMNS, ESTIMATE_COLUMNS

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ("sample_id", "feature_id", "status", "kind")
METRIC_COLUMNS = ("section", "name", "metric", "value")
ECDF_COLUMNS = ("name", "error", "fraction")
ROC_COLUMNS = ("threshold", "tpr", "tnr", "fpr")

# (sample_id, feature_id)
PairKey = Tuple[str, str]


def read_table(path: Union[str, Path], columns: Sequence[str]) -> pd.DataFrame:
    """Read a report CSV; every column in `columns` must be present. Ids stay strings."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"Input file '{path}' does not exist.")
    try:
        frame = pd.read_csv(path, dtype={"sample_id": str, "feature_id": str}, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetParseError(f"{path.name}: {exc}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DatasetParseError(f"{path.name}: missing column(s) {', '.join(missing)}.", column=missing[0])
    return frame


def _floats(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    try:
        return pd.to_numeric(frame[column]).to_numpy(dtype=float)
    except (TypeError, ValueError):
        raise DatasetParseError(f"{path.name}: column '{column}' is not numeric.", column=column) from None


def read_errors(path: Union[str, Path]) -> np.ndarray:
    """Location errors of an estimates.csv."""
    path = Path(path)
    frame = read_table(path, ESTIMATE_COLUMNS)
    if frame.empty:
        raise InvalidInputError(f"{path.name} holds no estimates.")
    return _floats(frame, "error", path)


def read_beliefs(path: Union[str, Path]) -> Dict[PairKey, float]:
    path = Path(path)
    frame = read_table(path, BELIEF_COLUMNS)
    values = _floats(frame, "belief", path)
    return {(s, f): float(v) for s, f, v in zip(frame["sample_id"], frame["feature_id"], values)}


def read_labels(path: Union[str, Path]) -> Dict[PairKey, str]:
    path = Path(path)
    frame = read_table(path, LABEL_COLUMNS)
    labels: Dict[PairKey, str] = {}
    for offset, (sample_id, feature, status) in enumerate(
        zip(frame["sample_id"], frame["feature_id"], frame["status"])
    ):
        if status not in (CHANGED, STABLE):
            raise DatasetParseError(
                f"{path.name}: unknown status '{status}'.", line=offset + 2, column="status",
            )
        labels[(sample_id, feature)] = status
    return labels


def parse_labeled_path(text: str) -> Tuple[str, Path]:
    """'NAME=PATH' or a bare PATH named after its file stem."""
    name, sep, value = text.partition("=")
    if sep and name and value:
        return name, Path(value)
    path = Path(text)
    return path.stem, path


# ---------------------------------------------------------------------------
# Positioning
# ---------------------------------------------------------------------------


def positioning_metrics(name: str, errors: Sequence[float], radius: float) -> List[Dict[str, Any]]:
    errors = np.asarray(errors, dtype=float)
    values = {
        "n": int(errors.size),
        "mean_error": float(np.mean(errors)),
        "median_error": float(np.median(errors)),
        "p90_error": float(np.percentile(errors, 90)),
        "accuracy": ecdf(errors).at(radius),
    }
    return [{"section": "positioning", "name": name, "metric": k, "value": v} for k, v in values.items()]


def ecdf_rows(name: str, curve: EcdfCurve) -> List[Dict[str, Any]]:
    return [{"name": name, "error": e, "fraction": f} for e, f in curve.points()]


# ---------------------------------------------------------------------------
# Change detection
# ---------------------------------------------------------------------------


def align_beliefs(beliefs: Mapping[PairKey, float], labels: Mapping[PairKey, str]) -> Dict[PairKey, float]:
    """
    Beliefs for exactly the labeled (sample, feature) pairs. A labeled pair with
    no belief row was neither measured nor expected and scores 0.
    """
    absent = sum(1 for key in labels if key not in beliefs)
    if absent:
        logger.info("%d labeled feature(s) have no belief row; scored 0.", absent)
    return {key: beliefs.get(key, 0.0) for key in labels}


def per_sample_auc(beliefs: Mapping[PairKey, float], labels: Mapping[PairKey, str]) -> Dict[str, float]:
    """AUC of every sample holding both classes."""
    grouped: Dict[str, Dict[str, str]] = {}
    for (sample_id, feature), status in labels.items():
        grouped.setdefault(sample_id, {})[feature] = status
    result = {}
    for sample_id in sorted(grouped):
        status = grouped[sample_id]
        if len(set(status.values())) < 2:
            continue
        scores = {feature: beliefs[(sample_id, feature)] for feature in status}
        result[sample_id] = roc_auc(scores, status).auc
    return result


def detection_metrics(
    beliefs: Mapping[PairKey, float],
    labels: Mapping[PairKey, str],
    threshold: float,
) -> Tuple[List[Dict[str, Any]], RocCurve]:
    """Pooled ROC over every labeled pair, the mean per-sample AUC and the confusion counts at `threshold`."""
    if not labels:
        raise InvalidInputError("The labels file holds no labeled features.")
    aligned = align_beliefs(beliefs, labels)
    # pooled keys are "sample_id/feature_id" strings so the metrics see one flat feature set
    flat_beliefs = {f"{s}/{f}": v for (s, f), v in aligned.items()}
    flat_labels = {f"{s}/{f}": v for (s, f), v in labels.items()}
    curve = roc_auc(flat_beliefs, flat_labels)
    counts = confusion(flat_beliefs, flat_labels, threshold)
    aucs = per_sample_auc(aligned, labels)

    values = {
        "n_features": len(labels),
        "n_changed": sum(1 for s in labels.values() if s == CHANGED),
        "pooled_auc": curve.auc,
        "mean_sample_auc": float(np.mean(list(aucs.values()))) if aucs else math.nan,
        "n_auc_samples": len(aucs),
        "threshold": threshold,
        "tp": counts.tp,
        "fn": counts.fn,
        "tn": counts.tn,
        "fp": counts.fp,
        "tpr": counts.tpr,
        "tnr": counts.tnr,
    }
    rows = [{"section": "detection", "name": "beliefs", "metric": k, "value": v} for k, v in values.items()]
    return rows, curve


def roc_rows(curve: RocCurve) -> List[Dict[str, Any]]:
    return [
        {"threshold": threshold, "tpr": tpr, "tnr": tnr, "fpr": 1.0 - tnr}
        for threshold, tpr, tnr in curve.points
    ]


def summarize(rows: Sequence[Mapping[str, Any]]) -> Dict[str, Dict[str, Dict[str, Any]]]:
    """Nest metric rows as {section: {name: {metric: value}}}; NaN becomes null."""
    summary: Dict[str, Dict[str, Dict[str, Any]]] = {}
    for row in rows:
        value = row["value"]
        if isinstance(value, float) and not math.isfinite(value):
            value = None
        summary.setdefault(row["section"], {}).setdefault(row["name"], {})[row["metric"]] = value
    return summary
