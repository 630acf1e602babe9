# fingerprints/services/storage.py

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from fingerprints.services.core import MISSING_DBM, GlobalFeatureRegistry, LabeledFingerprint
from fingerprints.services.errors import DatasetParseError, InvalidInputError
from fingerprints.services.ingestion import LONG_COLUMNS, parse_dataset
from fingerprints.services.kernel import Bounds, KernelParams, QueryConfig, RfmGrid, RfmTrainingSet

logger = logging.getLogger(__name__)

CONTAINER_VERSION = "1"
GRID_DTYPE = "<f4"
# Fixed member timestamp so identical content gives identical archives.
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


# ---------------------------------------------------------------------------
# Tables and JSON
# ---------------------------------------------------------------------------


def write_table(path: Union[str, Path], rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> Path:
    """CSV with a fixed column order, '\\n' line endings and shortest round-trip floats."""
    path = Path(path)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


ESTIMATE_COLUMNS = ("sample_id", "x", "y", "truth_x", "truth_y", "error")
BELIEF_COLUMNS = ("sample_id", "feature_id", "belief", "flagged")


def estimate_row(sample_id: Any, estimate: Tuple[float, float], truth: Tuple[float, float]) -> Dict[str, Any]:
    return {
        "sample_id": sample_id,
        "x": estimate[0],
        "y": estimate[1],
        "truth_x": truth[0],
        "truth_y": truth[1],
        "error": math.dist(estimate, truth),
    }


def write_json(path: Union[str, Path], data: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def write_key_values(path: Union[str, Path], values: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.write_text(format_key_values(values), encoding="utf-8")
    return path


def format_key_values(values: Mapping[str, Any]) -> str:
    lines = []
    for key in sorted(values):
        value = values[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def format_dataset(
    samples: Sequence[LabeledFingerprint],
    sample_ids: Optional[Sequence[Any]] = None,
) -> str:
    """Long-format CSV text of the samples, one row per (sample, feature)."""
    if sample_ids is None:
        sample_ids = range(len(samples))
    with_timestamps = any(s.timestamp is not None for s in samples)
    columns = list(LONG_COLUMNS) + (["timestamp"] if with_timestamps else [])

    rows: List[List[str]] = []
    for sample_id, sample in zip(sample_ids, samples):
        x, y = sample.location
        block = "" if sample.block is None else str(sample.block)
        if not sample.fingerprint:
            # an empty sample keeps its place as one featureless sentinel row
            row = [str(sample_id), repr(x), repr(y), block, "", f"{MISSING_DBM:g}"]
            if with_timestamps:
                row.append(_cell(sample.timestamp))
            rows.append(row)
        for feature in sorted(sample.fingerprint):
            row = [str(sample_id), repr(x), repr(y), block, feature, repr(sample.fingerprint.entries[feature])]
            if with_timestamps:
                row.append(_cell(sample.timestamp))
            rows.append(row)

    buffer = io.StringIO()
    buffer.write(f"# missing={MISSING_DBM:g}\n")
    pd.DataFrame(rows, columns=columns).to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def write_dataset(
    path: Union[str, Path],
    samples: Sequence[LabeledFingerprint],
    sample_ids: Optional[Sequence[Any]] = None,
) -> Path:
    path = Path(path)
    path.write_text(format_dataset(samples, sample_ids), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# RFM container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RfmModel:
    """Training set, kernel parameters and (optionally) the interpolated grid."""
    training: RfmTrainingSet
    params: KernelParams
    query: QueryConfig
    grid: Optional[RfmGrid] = None

    def expected_source(self) -> Union[RfmGrid, RfmTrainingSet]:
        """What expected fingerprints are looked up in: the grid if there is one."""
        return self.grid if self.grid is not None else self.training

    def require_grid(self) -> RfmGrid:
        if self.grid is None:
            raise InvalidInputError("This RFM container holds no interpolated grid.")
        return self.grid


def _params_text(params: KernelParams, query: QueryConfig) -> str:
    return format_key_values({
        "KERNEL_LENGTH_SCALE": repr(params.length_scale),
        "KERNEL_AMPLITUDE": repr(params.amplitude),
        "KERNEL_REG": repr(params.reg),
        "KERNEL_PRIOR_MEAN": repr(params.prior_mean),
        "KERNEL_LITERAL_NORMAL_EQUATIONS": params.literal_normal_equations,
        "QUERY_SCALE": repr(query.scale),
    })


def _write_member(archive: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    archive.writestr(info, data)


def save_rfm(path: Union[str, Path], model: RfmModel) -> Path:
    """Write the container; member order and timestamps are fixed."""
    path = Path(path)
    with zipfile.ZipFile(path, "w") as archive:
        _write_member(archive, "VERSION", (CONTAINER_VERSION + "\n").encode("ascii"))
        _write_member(archive, "training.csv", format_dataset(model.training.samples).encode("utf-8"))
        _write_member(archive, "params.env", _params_text(model.params, model.query).encode("utf-8"))
        if model.grid is not None:
            grid = model.grid
            header = {
                "bounds": [grid.bounds.xmin, grid.bounds.ymin, grid.bounds.xmax, grid.bounds.ymax],
                "spacing": grid.spacing,
                "nx": grid.nx,
                "ny": grid.ny,
                "registry": list(grid.registry),
                "dtype": GRID_DTYPE,
            }
            _write_member(archive, "grid.json", (json.dumps(header, sort_keys=True, indent=2) + "\n").encode("utf-8"))
            _write_member(archive, "grid.f32", np.ascontiguousarray(grid.values, dtype=GRID_DTYPE).tobytes())
    logger.info("Wrote RFM container %s (%d reference points).", path, len(model.training))
    return path


def _read_params(text: str) -> tuple[KernelParams, QueryConfig]:
    values = dotenv_values(stream=io.StringIO(text))
    try:
        params = KernelParams(
            length_scale=float(values["KERNEL_LENGTH_SCALE"]),
            amplitude=float(values["KERNEL_AMPLITUDE"]),
            reg=float(values["KERNEL_REG"]),
            prior_mean=float(values["KERNEL_PRIOR_MEAN"]),
            literal_normal_equations=str(values["KERNEL_LITERAL_NORMAL_EQUATIONS"]).lower() == "true",
        )
        query = QueryConfig(scale=float(values["QUERY_SCALE"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"params.env is incomplete or malformed ({exc}).", column="params.env") from None
    return params, query


def _read_grid(header_text: str, payload: bytes) -> RfmGrid:
    try:
        header = json.loads(header_text)
        if header.get("dtype") != GRID_DTYPE:
            raise DatasetParseError(f"Unsupported grid dtype {header.get('dtype')!r}.", column="grid.json")
        xmin, ymin, xmax, ymax = (float(v) for v in header["bounds"])
        registry = GlobalFeatureRegistry(tuple(header["registry"]))
        nx, ny = int(header["nx"]), int(header["ny"])
        spacing = float(header["spacing"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"grid.json is malformed ({exc}).", column="grid.json") from None

    expected = nx * ny * len(registry) * np.dtype(GRID_DTYPE).itemsize
    if len(payload) != expected:
        raise DatasetParseError(
            f"grid.f32 holds {len(payload)} bytes, expected {expected}.", column="grid.f32",
        )
    values = np.frombuffer(payload, dtype=GRID_DTYPE).reshape(nx * ny, len(registry))
    return RfmGrid(
        bounds=Bounds(xmin, ymin, xmax, ymax),
        spacing=spacing,
        nx=nx,
        ny=ny,
        registry=registry,
        values=values.astype(np.float32),
    )


def load_rfm(path: Union[str, Path]) -> RfmModel:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"RFM container '{path}' does not exist.")
    try:
        with zipfile.ZipFile(path) as archive:
            members: Dict[str, bytes] = {name: archive.read(name) for name in archive.namelist()}
    except zipfile.BadZipFile as exc:
        raise DatasetParseError(f"'{path}' is not an RFM container ({exc}).") from None

    for required in ("VERSION", "training.csv", "params.env"):
        if required not in members:
            raise DatasetParseError(f"Container member '{required}' is missing.", column=required)
    version = members["VERSION"].decode("ascii", errors="replace").strip()
    if version != CONTAINER_VERSION:
        raise DatasetParseError(f"Unsupported RFM container version '{version}'.", column="VERSION")

    params, query = _read_params(members["params.env"].decode("utf-8"))
    grid = None
    if "grid.json" in members:
        if "grid.f32" not in members:
            raise DatasetParseError("Container member 'grid.f32' is missing.", column="grid.f32")
        grid = _read_grid(members["grid.json"].decode("utf-8"), members["grid.f32"])

    dataset = parse_dataset(members["training.csv"].decode("utf-8"))
    try:
        training = dataset.training_set(registry=grid.registry if grid is not None else None)
    except InvalidInputError as exc:
        raise DatasetParseError(str(exc), column="training.csv") from None
    return RfmModel(training=training, params=params, query=query, grid=grid)
