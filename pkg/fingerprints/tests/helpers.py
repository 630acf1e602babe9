"""Small hand-built grids and training sets shared by the test modules."""
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from fingerprints.services.core import MISSING_DBM, Fingerprint, GlobalFeatureRegistry, LabeledFingerprint
from fingerprints.services.kernel import Bounds, RfmGrid, RfmTrainingSet


def fp(**entries: float) -> Fingerprint:
    return Fingerprint(entries)


def row_grid(cells: Sequence[Dict[str, float]], features: Sequence[str], spacing: float = 1.0) -> RfmGrid:
    """One row of cells along x; features absent from a cell dict are missing."""
    values = np.full((len(cells), len(features)), MISSING_DBM)
    for i, cell in enumerate(cells):
        for j, feature in enumerate(features):
            if feature in cell:
                values[i, j] = cell[feature]
    return RfmGrid(
        bounds=Bounds(0.0, 0.0, spacing * len(cells), spacing),
        spacing=spacing,
        nx=len(cells),
        ny=1,
        registry=GlobalFeatureRegistry(tuple(features)),
        values=values,
    )


def three_cell_grid() -> RfmGrid:
    """Cells centred at (0.5, 0.5), (1.5, 0.5) and (2.5, 0.5); 'a' fades and 'b' grows along x."""
    return row_grid(
        [{"a": -40.0, "b": -80.0}, {"a": -60.0, "b": -60.0}, {"a": -80.0, "b": -40.0}],
        ("a", "b"),
    )


def random_grid(nx: int, ny: int, n_features: int, seed: int = 7, spacing: float = 1.0) -> RfmGrid:
    """A grid of random, fully measurable fingerprints."""
    rng = np.random.default_rng(seed)
    features = tuple(f"f{j:02d}" for j in range(n_features))
    values = rng.uniform(-90.0, -40.0, size=(nx * ny, n_features))
    return RfmGrid(
        bounds=Bounds(0.0, 0.0, nx * spacing, ny * spacing),
        spacing=spacing,
        nx=nx,
        ny=ny,
        registry=GlobalFeatureRegistry(features),
        values=values,
    )


ROOM_APS = ((0.0, 0.0), (6.0, 0.0), (0.0, 4.0), (6.0, 4.0))


def room_rss(x: float, y: float) -> Dict[str, float]:
    """Noise-free log-distance readings of the four corner access points of a 6 m x 4 m room."""
    return {
        f"ap{i}": round(-40.0 - 30.0 * float(np.log10(max(np.hypot(x - ax, y - ay), 1.0))), 3)
        for i, (ax, ay) in enumerate(ROOM_APS)
    }


def _wide_csv(points: Sequence[Tuple[float, float]], shift: Optional[Dict[str, float]] = None) -> str:
    header = "x,y," + ",".join(f"ap{i}" for i in range(len(ROOM_APS)))
    rows = [header]
    for x, y in points:
        readings = room_rss(x, y)
        for feature, delta in (shift or {}).items():
            readings[feature] += delta
        rows.append(f"{x},{y}," + ",".join(repr(readings[f"ap{i}"]) for i in range(len(ROOM_APS))))
    return "\n".join(rows) + "\n"


def write_room_survey(directory: Path) -> Tuple[Path, Path]:
    """training.csv on a 1 m survey grid and queries.csv with three offset points, one of them with a moved AP."""
    training = [(x + 0.5, y + 0.5) for y in range(4) for x in range(6)]
    training_path = Path(directory) / "training.csv"
    training_path.write_text(_wide_csv(training), encoding="utf-8")

    queries_path = Path(directory) / "queries.csv"
    text = _wide_csv([(1.2, 1.1), (4.4, 2.6)]) + _wide_csv([(3.0, 2.0)], shift={"ap1": -15.0}).split("\n", 1)[1]
    queries_path.write_text(text, encoding="utf-8")
    return training_path, queries_path


def line_training(xs: Sequence[float], values: Sequence[float], feature: str = "a") -> RfmTrainingSet:
    """Reference points on the x axis, each measuring one feature."""
    samples = [
        LabeledFingerprint(location=(float(x), 0.0), fingerprint=Fingerprint({feature: float(v)}))
        for x, v in zip(xs, values)
    ]
    return RfmTrainingSet(samples)
