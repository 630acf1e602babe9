import numpy as np
from django.test import SimpleTestCase

from fingerprints.services.core import Fingerprint, cdm
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.positioning import (
    Dissimilarity,
    PositioningConfig,
    cdm_dissimilarities,
    euclidean_dissimilarities,
    knn_locate,
    knn_locate_dropout,
)
from fingerprints.tests.helpers import fp, random_grid, row_grid, three_cell_grid

EUCLIDEAN = PositioningConfig(k=1, dissimilarity=Dissimilarity.EUCLIDEAN)
CDM = PositioningConfig(k=1, dissimilarity=Dissimilarity.CDM)


class KnnTests(SimpleTestCase):
    def setUp(self):
        self.grid = three_cell_grid()

    def test_exact_cell_match(self):
        query = self.grid.cell_fingerprint(1)
        for cfg in (EUCLIDEAN, CDM):
            estimate = knn_locate(query, self.grid, cfg)
            self.assertEqual(estimate.location, (1.5, 0.5))
            self.assertEqual(estimate.neighbors, (1,))
            self.assertAlmostEqual(estimate.dissimilarities[0], 0.0, places=9)

    def test_k_equal_to_cells_gives_centroid(self):
        estimate = knn_locate(fp(a=-60, b=-60), self.grid, PositioningConfig(k=3))
        self.assertAlmostEqual(estimate.location[0], 1.5, places=12)
        self.assertAlmostEqual(estimate.location[1], 0.5, places=12)

    def test_ties_keep_cell_order(self):
        grid = row_grid([{"a": -50.0}, {"a": -50.0}, {"a": -50.0}], ("a",))
        self.assertEqual(knn_locate(fp(a=-50), grid, PositioningConfig(k=2)).neighbors, (0, 1))

    def test_weighted_average_leans_to_the_closer_cell(self):
        cfg = PositioningConfig(k=2, dissimilarity=Dissimilarity.EUCLIDEAN, weighted=True)
        estimate = knn_locate(fp(a=-45, b=-75), self.grid, cfg)
        self.assertLess(estimate.location[0], 1.0)

    def test_string_dissimilarity_is_accepted(self):
        self.assertIs(PositioningConfig(dissimilarity="euclidean").dissimilarity, Dissimilarity.EUCLIDEAN)

    def test_invalid_requests(self):
        with self.assertRaises(InvalidInputError):
            knn_locate(Fingerprint(), self.grid, CDM)
        with self.assertRaises(InvalidInputError):
            knn_locate(fp(a=-50), self.grid, PositioningConfig(k=4))
        with self.assertRaises(InvalidInputError):
            PositioningConfig(k=0)


class DissimilarityTests(SimpleTestCase):
    def test_vectorized_cdm_matches_pairwise_cdm(self):
        grid = row_grid(
            [{"a": -50.0, "b": -70.0}, {"b": -60.0, "c": -65.0}, {}, {"c": -90.0}],
            ("a", "b", "c"),
        )
        for query in (fp(a=-52, b=-66), fp(c=-70, zz=-40), fp(d=-50)):
            expected = [cdm(query, grid.cell_fingerprint(i), 3.0) for i in range(grid.n_cells)]
            np.testing.assert_allclose(cdm_dissimilarities(query, grid, 3.0), expected, rtol=1e-12)

    def test_euclidean_fills_missing_entries(self):
        grid = row_grid([{"a": -50.0}], ("a", "b"))
        np.testing.assert_allclose(euclidean_dissimilarities(fp(b=-60), grid), [np.hypot(60.0, 50.0)])

    def test_indicator_filling_biases_euclidean_but_not_cdm(self):
        grid = row_grid([{"a": -50.0, "b": -100.0}, {"a": -58.0}], ("a", "b"))
        query = fp(a=-50)
        self.assertEqual(knn_locate(query, grid, EUCLIDEAN).neighbors, (1,))
        self.assertEqual(knn_locate(query, grid, CDM).neighbors, (0,))


class DropoutTests(SimpleTestCase):
    def setUp(self):
        self.grid = three_cell_grid()

    def test_no_exclusion_equals_knn(self):
        query = fp(a=-58, b=-63)
        for cfg in (EUCLIDEAN, CDM):
            self.assertEqual(knn_locate_dropout(query, (), self.grid, cfg), knn_locate(query, self.grid, cfg))

    def test_single_remaining_feature(self):
        query = fp(a=-78, b=-79)
        for cfg in (EUCLIDEAN, CDM):
            self.assertEqual(knn_locate_dropout(query, {"b"}, self.grid, cfg).location, (2.5, 0.5))
            self.assertEqual(knn_locate(query, self.grid, cfg).location, (1.5, 0.5))

    def test_single_feature_matches_one_dimensional_oracle(self):
        grid = random_grid(4, 3, 5, seed=2)
        query = grid.cell_fingerprint(5)
        noisy = Fingerprint({k: v + 3.0 for k, v in query.entries.items()})
        keep = "f03"
        excluded = set(noisy) - {keep}
        column = grid.registry.index(keep)
        oracle = int(np.argmin(np.abs(grid.dense[:, column] - noisy.entries[keep])))
        estimate = knn_locate_dropout(noisy, excluded, grid, EUCLIDEAN)
        self.assertEqual(estimate.neighbors, (oracle,))

    def test_excluded_features_do_not_count_against_cells(self):
        # cell 0 measures the excluded 'a'; it must not pay a mismatch for it
        grid = row_grid([{"a": -50.0, "b": -61.0}, {"b": -60.0}], ("a", "b"))
        query = fp(a=-90, b=-60.6)
        np.testing.assert_allclose(
            cdm_dissimilarities(fp(b=-60.6), grid, 3.0, columns=np.array([1])), [0.4, 0.6], atol=1e-9,
        )
        self.assertEqual(knn_locate(fp(b=-60.6), grid, CDM).neighbors, (1,))
        for cfg in (EUCLIDEAN, CDM):
            self.assertEqual(knn_locate_dropout(query, {"a"}, grid, cfg).neighbors, (0,))

    def test_everything_excluded(self):
        with self.assertRaises(InvalidInputError):
            knn_locate_dropout(fp(a=-50), {"a"}, self.grid, CDM)
