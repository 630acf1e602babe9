import numpy as np
from django.test import SimpleTestCase

from fingerprints.services.core import Fingerprint
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.positioning import PositioningConfig, knn_locate_dropout
from fingerprints.services.robust import (
    CandidateSet,
    ResampleConfig,
    identify_candidates_mji,
    identify_candidates_threshold,
    intermediate_locations,
    query_seed,
    resample,
    robust_locate,
    robust_locate_threshold,
    select_by_mji,
)
from fingerprints.tests.helpers import fp, random_grid, row_grid, three_cell_grid


class ResampleTests(SimpleTestCase):
    def setUp(self):
        self.query = Fingerprint({f"f{j:02d}": -50.0 - j for j in range(10)})

    def test_sample_size(self):
        self.assertEqual(ResampleConfig(alpha=0.45).sample_size(20), 9)
        self.assertEqual(ResampleConfig(alpha=0.55).sample_size(4), 3)
        self.assertEqual(ResampleConfig(alpha=0.55).sample_size(2), 2)
        self.assertEqual(ResampleConfig(alpha=1.0).sample_size(7), 7)

    def test_subset_of_requested_size(self):
        cfg = ResampleConfig(alpha=0.5, seed=4)
        draw = resample(self.query, cfg, 0)
        self.assertEqual(len(draw), 5)
        self.assertTrue(set(draw) <= set(self.query))
        for feature in draw:
            self.assertEqual(draw.entries[feature], self.query.entries[feature])

    def test_same_stream_same_draw(self):
        cfg = ResampleConfig(alpha=0.5, seed=4)
        self.assertEqual(resample(self.query, cfg, 3), resample(self.query, cfg, 3))
        draws = {frozenset(resample(self.query, cfg, i)) for i in range(10)}
        self.assertGreater(len(draws), 1)

    def test_larger_ratio_extends_the_draw(self):
        small = resample(self.query, ResampleConfig(alpha=0.3, seed=4), 2)
        large = resample(self.query, ResampleConfig(alpha=0.7, seed=4), 2)
        self.assertEqual(len(small), 3)
        self.assertTrue(small.keys() < large.keys())

    def test_full_ratio_returns_the_query(self):
        self.assertIs(resample(self.query, ResampleConfig(alpha=1.0), 0), self.query)

    def test_validation(self):
        with self.assertRaises(InvalidInputError):
            ResampleConfig(alpha=0.0)
        with self.assertRaises(InvalidInputError):
            ResampleConfig(n_res=0)
        with self.assertRaises(InvalidInputError):
            resample(Fingerprint(), ResampleConfig(), 0)

    def test_query_seeds(self):
        self.assertEqual(query_seed(7, 3), query_seed(7, 3))
        self.assertNotEqual(query_seed(7, 3), query_seed(7, 4))
        self.assertNotEqual(query_seed(7, 3), query_seed(8, 3))
        self.assertGreaterEqual(query_seed(7, 3), 0)


class SelectByMjiTests(SimpleTestCase):
    def test_near_maximum_kept(self):
        selected, weights = select_by_mji([1.0, 0.98, 0.9], 0.97)
        self.assertEqual(selected, (0, 1))
        np.testing.assert_allclose(weights, [1.0 / 1.98, 0.98 / 1.98])

    def test_equal_scores_share_weight(self):
        selected, weights = select_by_mji([0.5, 0.5, 0.5, 0.5], 0.97)
        self.assertEqual(selected, (0, 1, 2, 3))
        np.testing.assert_allclose(weights, [0.25] * 4)

    def test_lambda_one_keeps_only_the_maximum(self):
        selected, _ = select_by_mji([0.2, 0.9, 0.9, 0.7], 1.0)
        self.assertEqual(selected, (1, 2))

    def test_all_zero_scores(self):
        selected, weights = select_by_mji([0.0, 0.0], 0.97)
        self.assertEqual(selected, (0, 1))
        np.testing.assert_allclose(weights, [0.5, 0.5])

    def test_weighted_location(self):
        selected, weights = select_by_mji([0.6, 0.3], 0.4)
        self.assertEqual(selected, (0, 1))
        np.testing.assert_allclose(weights, [2.0 / 3.0, 1.0 / 3.0])
        location = weights @ np.array([[1.0, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(location, [2.0 / 3.0, 0.0])

    def test_invalid(self):
        with self.assertRaises(InvalidInputError):
            select_by_mji([1.0], 0.0)
        with self.assertRaises(InvalidInputError):
            select_by_mji([], 0.5)


class CandidateTests(SimpleTestCase):
    def setUp(self):
        self.grid = three_cell_grid()
        self.query = self.grid.cell_fingerprint(1)

    def test_threshold_prefers_the_matching_cell(self):
        winner, counts = identify_candidates_threshold(self.query, [(0.5, 0.5), (1.5, 0.5)], self.grid, 0.0)
        self.assertEqual(winner, 1)
        np.testing.assert_array_equal(counts, [0, 2])

    def test_threshold_ties_pick_the_first(self):
        winner, _ = identify_candidates_threshold(self.query, [(1.5, 0.5), (1.4, 0.6)], self.grid, 5.0)
        self.assertEqual(winner, 0)

    def test_mji_scores_against_expected_fingerprints(self):
        grid = three_cell_grid()
        selection = identify_candidates_mji(fp(a=-50), [(0.5, 0.5), (2.5, 0.5)], grid, 0.97)
        # both cells measure a and b
        np.testing.assert_allclose(selection.scores, [0.75, 0.75])
        self.assertEqual(selection.selected, (0, 1))

    def test_no_locations(self):
        with self.assertRaises(InvalidInputError):
            identify_candidates_mji(self.query, [], self.grid, 0.97)
        with self.assertRaises(InvalidInputError):
            identify_candidates_threshold(self.query, [], self.grid, 10.0)

    def test_oracle_location(self):
        candidates = CandidateSet(
            locations=((0.0, 0.0), (1.0, 0.0), (5.0, 0.0)),
            scores=(1.0, 1.0, 1.0),
            selected=(0, 1),
            weights=(0.5, 0.5),
            location=(0.5, 0.0),
        )
        self.assertEqual(candidates.k, 2)
        self.assertEqual(candidates.oracle_location((4.0, 0.0)), (1.0, 0.0))
        self.assertEqual(candidates.oracle_location((0.5, 0.0)), (0.0, 0.0))


class RobustLocateTests(SimpleTestCase):
    def test_full_ratio_collapses_to_knn(self):
        grid = three_cell_grid()
        res_cfg = ResampleConfig(n_res=5, alpha=1.0)
        result = robust_locate(grid.cell_fingerprint(1), grid, grid, PositioningConfig(k=1), res_cfg)
        self.assertEqual(len(result.locations), 5)
        self.assertEqual(result.selected, (0, 1, 2, 3, 4))
        self.assertAlmostEqual(result.location[0], 1.5, places=9)
        self.assertAlmostEqual(result.location[1], 0.5, places=9)
        self.assertAlmostEqual(sum(result.weights), 1.0, places=12)

    def test_threshold_variant_returns_one_candidate(self):
        grid = three_cell_grid()
        res_cfg = ResampleConfig(n_res=4, alpha=1.0)
        result = robust_locate_threshold(grid.cell_fingerprint(2), grid, grid, PositioningConfig(k=1), res_cfg)
        self.assertEqual(result.selected, (0,))
        self.assertEqual(result.weights, (1.0,))
        self.assertEqual(result.location, (2.5, 0.5))

    def test_location_inside_the_selected_hull(self):
        grid = random_grid(5, 4, 12, seed=5)
        query = Fingerprint({k: v + 2.0 for k, v in grid.cell_fingerprint(7).entries.items()})
        result = robust_locate(query, grid, grid, PositioningConfig(k=1), ResampleConfig(n_res=30, seed=2))
        points = np.array([result.locations[j] for j in result.selected])
        self.assertTrue(np.all(points.min(axis=0) - 1e-9 <= result.location))
        self.assertTrue(np.all(result.location <= points.max(axis=0) + 1e-9))

    def test_workers_do_not_change_the_result(self):
        grid = random_grid(5, 4, 8, seed=9)
        query = Fingerprint({k: v - 3.0 for k, v in grid.cell_fingerprint(11).entries.items()})
        res_cfg = ResampleConfig(n_res=20, alpha=0.5, seed=3)
        one = robust_locate(query, grid, grid, PositioningConfig(k=2), res_cfg, workers=1)
        many = robust_locate(query, grid, grid, PositioningConfig(k=2), res_cfg, workers=4)
        self.assertEqual(one, many)

    def test_intermediate_locations_are_indexed_by_draw(self):
        grid = random_grid(4, 4, 6, seed=1)
        query = grid.cell_fingerprint(3)
        res_cfg = ResampleConfig(n_res=6, alpha=0.5, seed=11)
        estimates = intermediate_locations(query, grid, PositioningConfig(k=1), res_cfg)
        self.assertEqual(len(estimates), 6)
        self.assertEqual(estimates[4], intermediate_locations(query, grid, PositioningConfig(k=1), res_cfg)[4])

    def test_unsampled_features_are_dropped_from_the_grid(self):
        grid = row_grid([{"a": -50.0, "b": -61.0, "c": -70.0}, {"b": -60.0}], ("a", "b", "c"))
        query = fp(a=-50, b=-60.6, c=-70)
        res_cfg = ResampleConfig(n_res=6, alpha=0.3, min_features=1, seed=0)
        cfg = PositioningConfig(k=1)
        estimates = intermediate_locations(query, grid, cfg, res_cfg)
        for draw_index, estimate in enumerate(estimates):
            draw = resample(query, res_cfg, draw_index)
            self.assertEqual(len(draw), 1)
            self.assertEqual(estimate, knn_locate_dropout(draw, query.keys() - draw.keys(), grid, cfg))
            # every single feature points at the first cell once the others are left out
            self.assertEqual(estimate.location, (0.5, 0.5))


class ThresholdSensitivityTests(SimpleTestCase):
    def setUp(self):
        self.grid = row_grid(
            [
                {"a": -50.0, "b": -50.0, "c": -62.0, "d": -62.0},
                {"a": -54.0, "b": -54.0, "c": -54.0, "d": -70.0},
            ],
            ("a", "b", "c", "d"),
        )
        self.query = fp(a=-50, b=-50, c=-50, d=-50)
        self.locations = [(0.5, 0.5), (1.5, 0.5)]

    def test_winner_flips_between_thresholds(self):
        tight, tight_counts = identify_candidates_threshold(self.query, self.locations, self.grid, 5.0)
        loose, loose_counts = identify_candidates_threshold(self.query, self.locations, self.grid, 15.0)
        np.testing.assert_array_equal(tight_counts, [2, 3])
        np.testing.assert_array_equal(loose_counts, [4, 3])
        self.assertEqual((tight, loose), (1, 0))

    def test_mji_does_not_depend_on_the_threshold(self):
        # both cells measure every feature, so MJI keeps them both
        selection = identify_candidates_mji(self.query, self.locations, self.grid, 0.97)
        self.assertEqual(selection.selected, (0, 1))
        np.testing.assert_allclose(selection.weights, [0.5, 0.5])
