# fingerprints/management/commands/robust_localize.py
from dataclasses import replace
from pathlib import Path

from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.parallel import ordered_map
from fingerprints.services.robust import query_seed, robust_locate, robust_locate_threshold
from fingerprints.services.storage import ESTIMATE_COLUMNS, estimate_row, load_rfm, write_table

CANDIDATE_COLUMNS = ("sample_id", "draw", "x", "y", "score", "selected", "weight")


class Command(PipelineCommand):
    help = "Robust localization: feature resampling, intermediate locations and candidate weighting."
    name = "robust_localize"

    def add_command_arguments(self, parser):
        parser.add_argument("--rfm", required=True, help="RFM container written by build_rfm.")
        parser.add_argument("--queries", required=True, help="Query dataset CSV; x,y hold the ground truth.")
        parser.add_argument(
            "--variant",
            choices=["mji", "threshold"],
            default="mji",
            help="Candidate identification: MJI weighting (default) or the indicating-value threshold.",
        )

    def run(self, config, out_dir: Path, options) -> RunResult:
        rfm_path = self.input_path(options, "rfm")
        queries_path = self.input_path(options, "queries")
        model = load_rfm(rfm_path)
        grid = model.require_grid()
        source = model.expected_source()
        queries = read_dataset(queries_path)
        pos_cfg, res_cfg = config.positioning_config(), config.resample_config()
        variant = options.get("variant") or "mji"

        def locate(item):
            index, sample = item
            cfg = replace(res_cfg, seed=query_seed(config.seed, index))
            if variant == "threshold":
                return robust_locate_threshold(
                    sample.fingerprint, grid, source, pos_cfg, cfg, config["CANDIDATE_LAMBDA_RES"],
                    params=model.params, query=model.query,
                )
            return robust_locate(
                sample.fingerprint, grid, source, pos_cfg, cfg, config["CANDIDATE_LAMBDA_MJI"],
                params=model.params, query=model.query,
            )

        results = ordered_map(locate, list(enumerate(queries.samples)), config.workers)

        estimates, candidates = [], []
        for sample_id, sample, result in zip(queries.sample_ids, queries.samples, results):
            estimates.append(estimate_row(sample_id, result.location, sample.location))
            weights = dict(zip(result.selected, result.weights))
            for draw, (location, score) in enumerate(zip(result.locations, result.scores)):
                candidates.append({
                    "sample_id": sample_id,
                    "draw": draw,
                    "x": location[0],
                    "y": location[1],
                    "score": score,
                    "selected": int(draw in weights),
                    "weight": weights.get(draw, 0.0),
                })

        outputs = [
            write_table(out_dir / "estimates.csv", estimates, ESTIMATE_COLUMNS),
            write_table(out_dir / "candidates.csv", candidates, CANDIDATE_COLUMNS),
        ]
        return RunResult(inputs={"rfm": rfm_path, "queries": queries_path}, outputs=outputs)
