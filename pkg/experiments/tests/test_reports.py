import math
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from experiments.services.reports import (
    detection_metrics,
    parse_labeled_path,
    positioning_metrics,
    read_beliefs,
    read_errors,
    read_labels,
    read_table,
    roc_rows,
    summarize,
)
from experiments.services.simulation import CHANGED, STABLE
from fingerprints.services.errors import DatasetParseError, InvalidInputError


class ReportFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write(self, name, text):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_labeled_paths(self):
        self.assertEqual(parse_labeled_path("cdm=runs/estimates.csv"), ("cdm", Path("runs/estimates.csv")))
        self.assertEqual(parse_labeled_path("runs/knn.csv"), ("knn", Path("runs/knn.csv")))

    def test_missing_file(self):
        with self.assertRaises(InvalidInputError):
            read_table(self.dir / "absent.csv", ("sample_id",))

    def test_missing_column(self):
        path = self.write("estimates.csv", "sample_id,x,y\n0,1,2\n")
        with self.assertRaises(DatasetParseError) as caught:
            read_errors(path)
        self.assertEqual(caught.exception.column, "truth_x")

    def test_errors(self):
        path = self.write("estimates.csv", "sample_id,x,y,truth_x,truth_y,error\n0,1,1,1,2,1.0\n1,0,0,3,4,5.0\n")
        self.assertEqual(list(read_errors(path)), [1.0, 5.0])
        empty = self.write("empty.csv", "sample_id,x,y,truth_x,truth_y,error\n")
        with self.assertRaises(InvalidInputError):
            read_errors(empty)

    def test_beliefs_keep_string_ids(self):
        path = self.write("beliefs.csv", "sample_id,feature_id,belief,flagged\n007,00:1a,0.25,0\n")
        self.assertEqual(read_beliefs(path), {("007", "00:1a"): 0.25})

    def test_unknown_status(self):
        path = self.write("labels.csv", "sample_id,feature_id,status,kind\n0,a,moved,missing\n")
        with self.assertRaises(DatasetParseError) as caught:
            read_labels(path)
        self.assertEqual((caught.exception.line, caught.exception.column), (2, "status"))


class DetectionMetricTests(SimpleTestCase):
    beliefs = {("0", "a"): 0.9, ("0", "b"): 0.2, ("1", "a"): 0.7}
    labels = {("0", "a"): CHANGED, ("0", "b"): STABLE, ("1", "a"): STABLE, ("1", "b"): CHANGED}

    def test_pooled_and_per_sample(self):
        with self.assertLogs("experiments.services.reports", level="INFO"):
            rows, curve = detection_metrics(self.beliefs, self.labels, 0.5)
        values = {row["metric"]: row["value"] for row in rows}
        self.assertEqual(values["pooled_auc"], 0.5)
        self.assertEqual(values["mean_sample_auc"], 0.5)
        self.assertEqual(values["n_auc_samples"], 2)
        self.assertEqual((values["tp"], values["fn"], values["tn"], values["fp"]), (1, 1, 1, 1))
        self.assertEqual((values["n_features"], values["n_changed"]), (4, 2))
        self.assertEqual(curve.auc, 0.5)

    def test_roc_rows(self):
        _, curve = detection_metrics(self.beliefs, self.labels, 0.5)
        for row in roc_rows(curve):
            self.assertAlmostEqual(row["fpr"], 1.0 - row["tnr"], places=12)
            self.assertLessEqual(row["threshold"], 1.0 + 1e-6)

    def test_needs_labels(self):
        with self.assertRaises(InvalidInputError):
            detection_metrics(self.beliefs, {}, 0.5)


class SummaryTests(SimpleTestCase):
    def test_positioning_metrics(self):
        values = {row["metric"]: row["value"] for row in positioning_metrics("knn", [1.0, 2.0, 3.0, 4.0], 2.5)}
        self.assertEqual(values["n"], 4)
        self.assertEqual(values["mean_error"], 2.5)
        self.assertEqual(values["median_error"], 2.5)
        self.assertEqual(values["accuracy"], 0.5)

    def test_nested_summary(self):
        rows = [
            {"section": "positioning", "name": "knn", "metric": "accuracy", "value": 0.75},
            {"section": "detection", "name": "beliefs", "metric": "mean_sample_auc", "value": math.nan},
        ]
        self.assertEqual(
            summarize(rows),
            {
                "positioning": {"knn": {"accuracy": 0.75}},
                "detection": {"beliefs": {"mean_sample_auc": None}},
            },
        )
