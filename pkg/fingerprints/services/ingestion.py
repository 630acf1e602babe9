# fingerprints/services/ingestion.py

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from fingerprints.services.core import (
    MISSING_DBM,
    FeatureId,
    Fingerprint,
    GlobalFeatureRegistry,
    LabeledFingerprint,
    canonical_feature_id,
)
from fingerprints.services.errors import DatasetParseError, InvalidInputError
from fingerprints.services.kernel import RfmTrainingSet

logger = logging.getLogger(__name__)

LONG_COLUMNS = ("sample_id", "x", "y", "block", "feature_id", "rss")
WIDE_RESERVED = ("x", "y", "block", "timestamp")

# Sentinels a file may declare for "feature not measured".
KNOWN_SENTINELS = (100.0, MISSING_DBM)


@dataclass(frozen=True)
class Dataset:
    """Parsed dataset file: samples in file order, their ids and the metadata header."""
    samples: Tuple[LabeledFingerprint, ...]
    sample_ids: Tuple[str, ...]
    metadata: Dict[str, str] = field(default_factory=dict)
    layout: str = "long"

    def registry(self) -> GlobalFeatureRegistry:
        return GlobalFeatureRegistry(tuple(sorted({f for s in self.samples for f in s.fingerprint})))

    def training_set(self, registry: Optional[GlobalFeatureRegistry] = None) -> RfmTrainingSet:
        if not self.samples:
            raise InvalidInputError("Dataset contains no samples.")
        return RfmTrainingSet(self.samples, registry=registry or self.registry())


def _split_metadata(lines: List[str]) -> Tuple[Dict[str, str], int]:
    metadata: Dict[str, str] = {}
    count = 0
    for number, line in enumerate(lines, start=1):
        if not line.startswith("#"):
            break
        count += 1
        body = line[1:].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise DatasetParseError(f"Metadata line must read '# key=value', got '{line.strip()}'.", line=number)
        metadata[key.strip().lower()] = value.strip()
    return metadata, count


def _sentinel(metadata: Dict[str, str], line: Optional[int]) -> float:
    raw = metadata.get("missing")
    if raw is None:
        return MISSING_DBM
    try:
        value = float(raw)
    except ValueError:
        raise DatasetParseError(f"Missing sentinel '{raw}' is not a number.", line=line) from None
    if value not in KNOWN_SENTINELS:
        raise DatasetParseError(f"Unknown missing sentinel {raw}; expected 100 or -110.", line=line)
    return value


def _header(line: str, number: int) -> List[str]:
    columns = [c.strip().lower() for c in next(csv.reader([line]))]
    seen = set()
    for column in columns:
        if not column:
            raise DatasetParseError("Header contains an empty column name.", line=number)
        if column in seen:
            raise DatasetParseError("Duplicate column.", line=number, column=column)
        seen.add(column)
    return columns


def _number(raw: str, *, line: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DatasetParseError(f"'{raw}' is not a number.", line=line, column=column) from None


def _block(raw: str, *, line: int) -> Optional[int]:
    if raw == "":
        return None
    value = _number(raw, line=line, column="block")
    if not value.is_integer() or value < 1:
        raise DatasetParseError(f"Block index must be a positive integer, got '{raw}'.", line=line, column="block")
    return int(value)


def _timestamp(raw: str, *, line: int) -> Optional[float]:
    return None if raw == "" else _number(raw, line=line, column="timestamp")


def _reading(raw: str, sentinel: float, *, line: int, column: str) -> Optional[float]:
    if raw == "":
        return None
    value = _number(raw, line=line, column=column)
    if value == sentinel or math.isnan(value):
        return None
    return value


def _parse_wide(frame: pd.DataFrame, sentinel: float, first_line: int) -> Tuple[List[LabeledFingerprint], List[str]]:
    features = [c for c in frame.columns if c not in WIDE_RESERVED]
    samples, ids = [], []
    skipped = 0
    for i, row in enumerate(frame.itertuples(index=False)):
        record = dict(zip(frame.columns, row))
        line = first_line + i
        x = _number(record["x"], line=line, column="x")
        y = _number(record["y"], line=line, column="y")
        if not (math.isfinite(x) and math.isfinite(y)):
            skipped += 1
            continue
        raw: Dict[str, float] = {}
        for feature in features:
            value = _reading(record[feature], sentinel, line=line, column=feature)
            if value is not None:
                raw[feature] = value
        samples.append(LabeledFingerprint(
            location=(x, y),
            fingerprint=Fingerprint.from_measurements(raw),
            timestamp=_timestamp(record.get("timestamp", ""), line=line),
            block=_block(record.get("block", ""), line=line),
        ))
        ids.append(str(i))
    if skipped:
        logger.warning("Skipped %d row(s) with non-finite coordinates.", skipped)
    return samples, ids


def _parse_long(frame: pd.DataFrame, sentinel: float, first_line: int) -> Tuple[List[LabeledFingerprint], List[str]]:
    readings: Dict[str, Dict[FeatureId, float]] = {}
    heads: Dict[str, Tuple[float, float, Optional[int], Optional[float], int]] = {}
    for i, row in enumerate(frame.itertuples(index=False)):
        record = dict(zip(frame.columns, row))
        line = first_line + i
        sample_id = record["sample_id"].strip()
        if not sample_id:
            raise DatasetParseError("Empty sample id.", line=line, column="sample_id")
        x = _number(record["x"], line=line, column="x")
        y = _number(record["y"], line=line, column="y")
        block = _block(record.get("block", ""), line=line)
        timestamp = _timestamp(record.get("timestamp", ""), line=line)
        head = heads.setdefault(sample_id, (x, y, block, timestamp, line))
        if head[:4] != (x, y, block, timestamp) and not (math.isnan(x) or math.isnan(y)):
            raise DatasetParseError(
                f"Sample '{sample_id}' changes location, block or timestamp (first seen on line {head[4]}).",
                line=line,
            )

        entries = readings.setdefault(sample_id, {})
        if not str(record["feature_id"]).strip():
            # featureless row: only allowed as the placeholder of an empty sample
            if _reading(record["rss"], sentinel, line=line, column="rss") is not None:
                raise DatasetParseError("Empty feature id with an RSS reading.", line=line, column="feature_id")
            continue
        try:
            feature = canonical_feature_id(record["feature_id"])
        except InvalidInputError as exc:
            raise DatasetParseError(str(exc), line=line, column="feature_id") from None
        if feature in entries:
            raise DatasetParseError(
                f"Feature '{feature}' appears twice in sample '{sample_id}'.", line=line, column="feature_id",
            )
        value = _reading(record["rss"], sentinel, line=line, column="rss")
        # a sentinel reading still occupies the (sample, feature) slot
        entries[feature] = MISSING_DBM if value is None else value

    samples, ids = [], []
    skipped = 0
    for sample_id, (x, y, block, timestamp, _) in heads.items():
        if not (math.isfinite(x) and math.isfinite(y)):
            skipped += 1
            continue
        samples.append(LabeledFingerprint(
            location=(x, y),
            fingerprint=Fingerprint.from_measurements(readings[sample_id]),
            timestamp=timestamp,
            block=block,
        ))
        ids.append(sample_id)
    if skipped:
        logger.warning("Skipped %d sample(s) with non-finite coordinates.", skipped)
    return samples, ids


def parse_dataset(text: str) -> Dataset:
    """
    Parse a wide or long dataset CSV.

    Leading '# key=value' lines are metadata; `missing` declares the sentinel
    (100 or -110) that marks an unmeasured feature.
    """
    lines = text.splitlines()
    metadata, n_meta = _split_metadata(lines)
    sentinel = _sentinel(metadata, n_meta or None)
    header_line = n_meta + 1
    if len(lines) < header_line or not lines[n_meta].strip():
        raise DatasetParseError("Missing header row.", line=header_line)
    columns = _header(lines[n_meta], header_line)

    if {"sample_id", "feature_id", "rss"} <= set(columns):
        layout = "long"
        required = ("sample_id", "x", "y", "feature_id", "rss")
    elif {"x", "y"} <= set(columns):
        layout = "wide"
        required = ("x", "y")
    else:
        raise DatasetParseError(
            "Header must hold either sample_id,x,y,block,feature_id,rss or x,y and feature columns.",
            line=header_line,
        )
    for column in required:
        if column not in columns:
            raise DatasetParseError("Required column is missing.", line=header_line, column=column)

    body = "\n".join(lines[n_meta + 1:])
    if body.strip():
        try:
            frame = pd.read_csv(
                io.StringIO(body),
                header=None,
                names=columns,
                index_col=False,
                dtype=str,
                keep_default_na=False,
                skip_blank_lines=True,
            )
        except pd.errors.ParserError as exc:
            raise DatasetParseError(f"Malformed row ({exc}).") from None
        frame = frame.fillna("").apply(lambda col: col.str.strip())
    else:
        frame = pd.DataFrame(columns=columns, dtype=str)

    first_line = header_line + 1
    if layout == "long":
        samples, ids = _parse_long(frame, sentinel, first_line)
    else:
        samples, ids = _parse_wide(frame, sentinel, first_line)
    logger.info("Parsed %d %s-format sample(s).", len(samples), layout)
    return Dataset(samples=tuple(samples), sample_ids=tuple(ids), metadata=metadata, layout=layout)


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InvalidInputError(f"Dataset file '{path}' does not exist.") from None
    except UnicodeDecodeError as exc:
        raise DatasetParseError(f"Dataset file '{path}' is not UTF-8 text ({exc}).") from None
    return parse_dataset(text)


def ingest(path: str | Path) -> RfmTrainingSet:
    """Read a dataset file into a training set with a sorted feature registry."""
    return read_dataset(path).training_set()
