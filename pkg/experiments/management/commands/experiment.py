# experiments/management/commands/experiment.py
import math
from pathlib import Path

import numpy as np

from experiments.services.protocols import (
    POSITIONING_METHODS,
    change_spec_from_config,
    radius_study,
    run_detection_experiment,
    run_missing_feature_comparison,
    run_positioning_experiment,
)
from experiments.services.simulation import inject_dataset, smooth_validation
from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.storage import load_rfm, write_json, write_table

PROTOCOLS = ("positioning", "detection", "missing", "radius")
POSITIONING_COLUMNS = ("sample_id",) + tuple(f"error_{method}" for method in POSITIONING_METHODS)
DETECTION_COLUMNS = ("sample_id", "n_features", "n_changed", "auc")
MISSING_COLUMNS = ("missing_ratio", "accuracy_euclidean", "accuracy_cdm")
RADIUS_COLUMNS = ("scale", "radius", "mae", "seconds")

DEFAULT_MISSING_RATIOS = [0.1, 0.2, 0.3, 0.4, 0.5]
DEFAULT_RADIUS_SCALES = [0.5, 1.0, 2.0, 5.0, 8.0]


def _finite_or_none(value: float):
    return None if math.isnan(value) else value


class Command(PipelineCommand):
    help = "Run one evaluation protocol end to end on a validation set: positioning, detection, missing or radius."
    name = "experiment"

    def add_command_arguments(self, parser):
        parser.add_argument("--protocol", required=True, choices=PROTOCOLS, help="Which protocol to run.")
        parser.add_argument("--rfm", required=True, help="RFM container written by build_rfm.")
        parser.add_argument(
            "--validation",
            required=True,
            help="Validation dataset CSV. It is smoothed with the container's training set before changes are injected.",
        )
        parser.add_argument(
            "--at-truth",
            action="store_true",
            help="detection: compare against the expected fingerprint at the true location.",
        )
        parser.add_argument(
            "--missing-ratios",
            nargs="+",
            type=float,
            default=DEFAULT_MISSING_RATIOS,
            help="missing: shares of features forced missing.",
        )
        parser.add_argument(
            "--scales",
            nargs="+",
            type=float,
            default=DEFAULT_RADIUS_SCALES,
            help="radius: query-radius scales in length-scale units.",
        )

    def run(self, config, out_dir: Path, options) -> RunResult:
        rfm_path = self.input_path(options, "rfm")
        validation_path = self.input_path(options, "validation")
        model = load_rfm(rfm_path)
        validation = read_dataset(validation_path)
        if not validation.samples:
            raise InvalidInputError(f"Validation dataset '{validation_path}' holds no samples.")

        protocol = options["protocol"]
        if protocol == "radius":
            rows = radius_study(
                model.training, model.params, options.get("scales") or DEFAULT_RADIUS_SCALES,
                [s.location for s in validation.samples],
            )
            summary = {"n_locations": len(validation.samples), "mae": {str(row["scale"]): row["mae"] for row in rows}}
            outputs = [write_table(out_dir / "radius.csv", rows, RADIUS_COLUMNS)]
        else:
            baseline = smooth_validation(
                validation.samples, model.training, model.params, model.query, workers=config.workers,
            )
            grid = model.require_grid()
            if protocol == "missing":
                ratios = options.get("missing_ratios") or DEFAULT_MISSING_RATIOS
                if any(not 0.0 <= ratio <= 1.0 for ratio in ratios):
                    raise InvalidInputError("--missing-ratios must lie in [0, 1].")
                rows = run_missing_feature_comparison(
                    baseline, grid, config.positioning_config(), ratios,
                    seed=config.seed, radius=config["EVALUATION_RADIUS"],
                )
                summary = {"n_queries": len(baseline), "rows": rows}
                outputs = [write_table(out_dir / "missing.csv", rows, MISSING_COLUMNS)]
            else:
                outputs, summary = self.run_injected(protocol, config, out_dir, options, model, grid, baseline, validation)

        summary["protocol"] = protocol
        outputs.append(write_json(out_dir / "summary.json", summary))
        return RunResult(inputs={"rfm": rfm_path, "validation": validation_path}, outputs=outputs)

    def run_injected(self, protocol, config, out_dir, options, model, grid, baseline, validation):
        spec = change_spec_from_config(config)
        queries = inject_dataset(baseline, spec)
        if not queries:
            raise InvalidInputError("Change injection left no query with a feature.")
        shared = dict(
            lambda_mji=config["CANDIDATE_LAMBDA_MJI"],
            params=model.params,
            query=model.query,
            workers=config.workers,
        )
        source = model.expected_source()
        summary = {"tag": spec.tag, "n_queries": len(queries)}

        if protocol == "positioning":
            report = run_positioning_experiment(
                queries, grid, source, config.positioning_config(), config.resample_config(),
                config.variability_model(), threshold=config["DETECTION_THRESHOLD"],
                radius=config["EVALUATION_RADIUS"], **shared,
            )
            rows = [{**row, "sample_id": validation.sample_ids[row["sample_id"]]} for row in report.rows]
            summary["radius"] = config["EVALUATION_RADIUS"]
            summary["accuracy"] = report.accuracy
            summary["median_error"] = {
                method: float(np.median([row[f"error_{method}"] for row in report.rows]))
                for method in POSITIONING_METHODS
            }
            return [write_table(out_dir / "positioning.csv", rows, POSITIONING_COLUMNS)], summary

        report = run_detection_experiment(
            queries, grid, source, config.positioning_config(), config.resample_config(),
            config.variability_model(), at_truth=bool(options.get("at_truth")), **shared,
        )
        rows = [{**row, "sample_id": validation.sample_ids[row["sample_id"]]} for row in report.rows]
        summary["at_truth"] = bool(options.get("at_truth"))
        summary["mean_auc"] = _finite_or_none(report.mean_auc)
        summary["n_scored"] = sum(not math.isnan(row["auc"]) for row in report.rows)
        return [write_table(out_dir / "detection.csv", rows, DETECTION_COLUMNS)], summary
