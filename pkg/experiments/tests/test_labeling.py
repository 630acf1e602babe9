import math

from django.test import SimpleTestCase

from experiments.services.labeling import (
    MAD_SCALE,
    BlockStats,
    inter_block_ratio,
    label_dataset,
    label_inter_block,
    label_within_block,
    robust_stats,
)
from experiments.services.simulation import CHANGED, STABLE
from fingerprints.services.core import LabeledFingerprint
from fingerprints.services.errors import InvalidInputError
from fingerprints.tests.helpers import fp


class RobustStatsTests(SimpleTestCase):
    def test_median_and_scaled_mad(self):
        mu, sigma = robust_stats([-50, -52, -51, -49, -60])
        self.assertEqual(mu, -51.0)
        self.assertAlmostEqual(sigma, 1.4826, places=12)

    def test_degenerate_inputs(self):
        self.assertEqual(robust_stats([-50, -50, -50]), (-50.0, 0.0))
        self.assertEqual(robust_stats([-63.5]), (-63.5, 0.0))
        with self.assertRaises(InvalidInputError):
            robust_stats([])

    def test_order_does_not_matter(self):
        values = [-50, -52, -51, -49, -60]
        self.assertEqual(robust_stats(values), robust_stats(list(reversed(values))))
        self.assertEqual(robust_stats(values)[0], robust_stats(values + [-51, -51])[0])


class WithinBlockTests(SimpleTestCase):
    def test_all_equal(self):
        self.assertEqual(label_within_block([-50, -50, -50]), [STABLE] * 3)

    def test_zero_spread_outlier(self):
        self.assertEqual(label_within_block([-50, -50, -50, -50, -80]), [STABLE] * 4 + [CHANGED])

    def test_three_sigma_rule(self):
        # median -50, MAD 1
        labels = label_within_block([-50, -49, -51, -50, -49, -51, -50 - 4.5])
        self.assertEqual(labels[-1], CHANGED)
        self.assertEqual(set(labels[:-1]), {STABLE})
        labels = label_within_block([-50, -49, -51, -50, -49, -51, -50 - 4.4])
        self.assertEqual(labels[-1], STABLE)


class InterBlockTests(SimpleTestCase):
    def test_ratio(self):
        self.assertAlmostEqual(inter_block_ratio(-50, 1, -60, 2), 10 / (3 * math.sqrt(5)), places=12)
        self.assertEqual(inter_block_ratio(-50, 1, -50, 2), 0.0)

    def test_zero_spread_conventions(self):
        self.assertEqual(inter_block_ratio(-50, 0, -50, 0), 0.0)
        self.assertEqual(inter_block_ratio(-50, 0, -55, 0), math.inf)

    def test_labels(self):
        first = BlockStats((0.0, 0.0), "a", 1, -50.0, 1.0, 10)
        later = BlockStats((0.0, 0.0), "a", 2, -60.0, 2.0, 10)
        self.assertEqual(label_inter_block(first, later), CHANGED)
        self.assertEqual(label_inter_block(later, later), STABLE)
        flat = BlockStats((0.0, 0.0), "a", 3, -55.0, 0.0, 4)
        self.assertEqual(label_inter_block(flat, flat), STABLE)
        self.assertEqual(label_inter_block(flat, BlockStats((0.0, 0.0), "a", 4, -56.0, 0.0, 4)), CHANGED)


class LabelDatasetTests(SimpleTestCase):
    def setUp(self):
        readings = [
            (1, -50, -70), (1, -51, -71), (1, -49, -69),
            (2, -60, -70), (2, -61, -69), (2, -59, -71),
        ]
        self.samples = [LabeledFingerprint((1.0, 2.0), fp(a=a, b=b), block=block) for block, a, b in readings]
        self.samples.append(LabeledFingerprint((5.0, 5.0), fp(a=-40), block=1))

    def test_blocks_compared_with_the_first(self):
        result = label_dataset(self.samples)
        labels = {(b.location, b.feature, b.block): b for b in result.blocks}
        self.assertEqual(labels[((1.0, 2.0), "a", 1)].status, STABLE)
        self.assertEqual(labels[((1.0, 2.0), "a", 2)].status, CHANGED)
        self.assertEqual(labels[((1.0, 2.0), "b", 2)].status, STABLE)
        self.assertEqual(labels[((1.0, 2.0), "a", 2)].reference_block, 1)
        self.assertAlmostEqual(
            labels[((1.0, 2.0), "a", 2)].ratio, 10 / (3 * math.hypot(MAD_SCALE, MAD_SCALE)), places=9,
        )
        self.assertEqual(labels[((5.0, 5.0), "a", 1)].status, STABLE)

    def test_statistics_and_reading_labels(self):
        result = label_dataset(self.samples)
        stats = {(s.location, s.feature, s.block): s for s in result.stats}
        self.assertEqual(len(stats), 5)
        self.assertEqual(stats[((1.0, 2.0), "a", 2)].mu, -60.0)
        self.assertEqual(stats[((1.0, 2.0), "a", 2)].count, 3)
        self.assertEqual(len(result.samples), 13)
        self.assertEqual({label.status for label in result.samples}, {STABLE})
