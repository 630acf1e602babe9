import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, override_settings

from fingerprints.services.config import (
    build_run_config,
    load_run_config,
    parse_assignment,
    read_config_file,
    split_key,
)
from fingerprints.services.errors import ConfigError
from fingerprints.services.positioning import Dissimilarity


class KeyTests(SimpleTestCase):
    def test_split_key(self):
        self.assertEqual(split_key("KERNEL_LENGTH_SCALE"), ("KERNEL", "length_scale"))
        self.assertEqual(split_key("SEED"), ("RUN", "seed"))
        with self.assertRaises(ConfigError):
            split_key("COLOR_BLUE")
        with self.assertRaises(ConfigError):
            split_key("KERNEL")

    def test_parse_assignment(self):
        self.assertEqual(parse_assignment(" kernel_reg = 0.5"), ("KERNEL_REG", "0.5"))
        with self.assertRaises(ConfigError):
            parse_assignment("KERNEL_REG")
        with self.assertRaises(ConfigError):
            parse_assignment("=3")


class LoadRunConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write(self, text):
        path = self.dir / "run.env"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults(self):
        config = load_run_config()
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.workers, 1)
        self.assertEqual(config["QUERY_SCALE"], 5.0)
        self.assertEqual(config["RESAMPLE_N"], 200)
        self.assertIs(config["CHANGE_REDRAW_PER_SAMPLE"], True)
        self.assertEqual(config.positioning_config().dissimilarity, Dissimilarity.CDM)
        self.assertEqual(config.kernel_params().prior_mean, -110.0)
        self.assertEqual(set(config.as_dict()), set(settings.RFM_DEFAULTS))

    def test_layers(self):
        path = self.write("SEED=5\nKERNEL_REG=0.5\nPOSITIONING_K=4\n")
        config = load_run_config(config_path=path, assignments=["kernel_reg=0.25"], seed=9, workers=3)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.workers, 3)
        self.assertEqual(config["KERNEL_REG"], 0.25)
        self.assertEqual(config["POSITIONING_K"], 4)
        self.assertEqual(config.resample_config().seed, 9)

    @override_settings(RFM_DEFAULTS={**settings.RFM_DEFAULTS, "POSITIONING_K": "5"})
    def test_settings_defaults(self):
        self.assertEqual(load_run_config().positioning_config().k, 5)

    def test_unknown_keys(self):
        with self.assertRaises(ConfigError):
            load_run_config(assignments=["KERNEL_COLOR=red"])
        with self.assertRaises(ConfigError):
            load_run_config(config_path=self.write("TOTALLY_UNKNOWN=1\n"))
        with self.assertRaises(ConfigError):
            load_run_config(config_path=self.dir / "absent.env")

    def test_config_file_keys_need_values(self):
        with self.assertRaises(ConfigError):
            read_config_file(self.write("SEED\n"))

    def test_query_scale_must_exceed_one(self):
        with self.assertRaisesMessage(ConfigError, "QUERY_SCALE"):
            load_run_config(assignments=["QUERY_SCALE=1"])

    def test_change_ratios(self):
        with self.assertRaises(ConfigError):
            load_run_config(assignments=["CHANGE_MISSING_RATIO=0.4", "CHANGE_SHIFT_RATIO=0.2"])
        config = load_run_config(assignments=["CHANGE_MISSING_RATIO=0.3", "CHANGE_SHIFT_RATIO=0.2"])
        self.assertEqual(config["CHANGE_SHIFT_RATIO"], 0.2)
        with self.assertRaises(ConfigError):
            load_run_config(assignments=["CHANGE_SHIFT_DBM=7"])

    def test_invalid_values(self):
        for assignment in ("RESAMPLE_ALPHA=0", "CANDIDATE_LAMBDA_MJI=1.5", "WORKERS=0", "KERNEL_LENGTH_SCALE=-1",
                           "POSITIONING_DISSIMILARITY=manhattan", "SWEEP_RATIO_START=0.99"):
            with self.subTest(assignment=assignment), self.assertRaises(ConfigError):
                load_run_config(assignments=[assignment])

    def test_unknown_key_lookup(self):
        config = build_run_config({"SEED": "1", "WORKERS": "2"})
        self.assertEqual(config.seed, 1)
        with self.assertRaises(ConfigError):
            config["KERNEL_REG"]
