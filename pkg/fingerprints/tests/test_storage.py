import json
import tempfile
import zipfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from fingerprints.services.core import Fingerprint, LabeledFingerprint
from fingerprints.services.errors import DatasetParseError, InvalidInputError
from fingerprints.services.ingestion import parse_dataset
from fingerprints.services.kernel import KernelParams, QueryConfig, RfmTrainingSet
from fingerprints.services.storage import (
    RfmModel,
    format_dataset,
    format_key_values,
    load_rfm,
    save_rfm,
    write_table,
)
from fingerprints.tests.helpers import random_grid


def _training():
    return RfmTrainingSet([
        LabeledFingerprint((0.25, 1.0 / 3.0), Fingerprint({"f00": -50.125, "f01": -71.0}), block=1),
        LabeledFingerprint((2.0, 0.1), Fingerprint({"f02": -88.3}), timestamp=4.5),
    ])


class ContainerTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        grid = random_grid(3, 2, 3, seed=4)
        self.model = RfmModel(
            training=_training(),
            params=KernelParams(length_scale=1.7, reg=0.05),
            query=QueryConfig(scale=4.0),
            grid=grid,
        )

    def test_round_trip(self):
        path = save_rfm(self.dir / "model.rfm", self.model)
        loaded = load_rfm(path)
        self.assertEqual(loaded.training.samples, self.model.training.samples)
        self.assertEqual(loaded.params, self.model.params)
        self.assertEqual(loaded.query, self.model.query)
        grid = loaded.require_grid()
        self.assertEqual((grid.nx, grid.ny), (3, 2))
        self.assertEqual(grid.registry.features, self.model.grid.registry.features)
        np.testing.assert_array_equal(grid.values, self.model.grid.values.astype(np.float32))
        self.assertIs(loaded.expected_source(), grid)

    def test_saves_are_byte_identical(self):
        one = save_rfm(self.dir / "one.rfm", self.model).read_bytes()
        two = save_rfm(self.dir / "two.rfm", self.model).read_bytes()
        self.assertEqual(one, two)

    def test_without_grid(self):
        model = RfmModel(training=_training(), params=KernelParams(), query=QueryConfig())
        loaded = load_rfm(save_rfm(self.dir / "bare.rfm", model))
        self.assertIsNone(loaded.grid)
        self.assertIsInstance(loaded.expected_source(), RfmTrainingSet)
        with self.assertRaises(InvalidInputError):
            loaded.require_grid()

    def test_round_trip_keeps_an_empty_sample(self):
        samples = list(_training().samples) + [LabeledFingerprint((1.0, 1.5), Fingerprint({}))]
        model = RfmModel(training=RfmTrainingSet(samples), params=KernelParams(), query=QueryConfig())
        loaded = load_rfm(save_rfm(self.dir / "empty.rfm", model))
        self.assertEqual(len(loaded.training), 3)
        self.assertEqual(loaded.training.samples[2].fingerprint, Fingerprint({}))
        self.assertEqual(loaded.training.samples, model.training.samples)

    def _rewrite(self, source, target, replace):
        with zipfile.ZipFile(source) as archive:
            members = {name: archive.read(name) for name in archive.namelist()}
        members.update(replace)
        with zipfile.ZipFile(target, "w") as archive:
            for name, data in members.items():
                archive.writestr(name, data)
        return target

    def test_unsupported_version(self):
        path = save_rfm(self.dir / "model.rfm", self.model)
        broken = self._rewrite(path, self.dir / "v2.rfm", {"VERSION": b"2\n"})
        with self.assertRaises(DatasetParseError) as caught:
            load_rfm(broken)
        self.assertEqual(caught.exception.column, "VERSION")

    def test_truncated_grid(self):
        path = save_rfm(self.dir / "model.rfm", self.model)
        with zipfile.ZipFile(path) as archive:
            payload = archive.read("grid.f32")
        broken = self._rewrite(path, self.dir / "short.rfm", {"grid.f32": payload[:-4]})
        with self.assertRaises(DatasetParseError) as caught:
            load_rfm(broken)
        self.assertEqual(caught.exception.column, "grid.f32")

    def test_wrong_dtype(self):
        path = save_rfm(self.dir / "model.rfm", self.model)
        with zipfile.ZipFile(path) as archive:
            header = json.loads(archive.read("grid.json"))
        header["dtype"] = "<f8"
        broken = self._rewrite(path, self.dir / "f8.rfm", {"grid.json": json.dumps(header).encode()})
        with self.assertRaises(DatasetParseError):
            load_rfm(broken)

    def test_not_a_container(self):
        path = self.dir / "plain.rfm"
        path.write_text("not a zip", encoding="utf-8")
        with self.assertRaises(DatasetParseError):
            load_rfm(path)
        with self.assertRaises(InvalidInputError):
            load_rfm(self.dir / "absent.rfm")


class TextFormatTests(SimpleTestCase):
    def test_dataset_text_round_trip(self):
        training = _training()
        text = format_dataset(training.samples, ["a", "b"])
        self.assertTrue(text.startswith("# missing=-110\n"))
        dataset = parse_dataset(text)
        self.assertEqual(dataset.sample_ids, ("a", "b"))
        self.assertEqual(dataset.samples, training.samples)

    def test_empty_sample_is_one_sentinel_row(self):
        samples = [
            LabeledFingerprint((0.0, 0.0), Fingerprint({"f00": -60.0})),
            LabeledFingerprint((3.0, 4.0), Fingerprint({})),
        ]
        text = format_dataset(samples, ["a", "b"])
        self.assertIn("\nb,3.0,4.0,,,-110\n", text)
        dataset = parse_dataset(text)
        self.assertEqual(dataset.sample_ids, ("a", "b"))
        self.assertEqual(len(dataset.samples[1].fingerprint), 0)
        self.assertNotIn("f00", dataset.samples[1].fingerprint)
        self.assertEqual(dataset.samples, tuple(samples))

    def test_key_values_are_sorted(self):
        self.assertEqual(format_key_values({"B": 1, "A": True}), "A=true\nB=1\n")

    def test_table_keeps_the_column_order(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_table(Path(tmp) / "t.csv", [{"b": 2, "a": 1.5}], ("a", "b"))
            self.assertEqual(path.read_text(encoding="utf-8"), "a,b\n1.5,2\n")
