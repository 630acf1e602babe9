# fingerprints/management/commands/detect.py
from dataclasses import replace
from pathlib import Path

from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.changes import detect_changes, drop_changed_and_relocate
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.parallel import ordered_map
from fingerprints.services.robust import query_seed, robust_locate
from fingerprints.services.storage import (
    BELIEF_COLUMNS,
    ESTIMATE_COLUMNS,
    estimate_row,
    load_rfm,
    write_table,
)


class Command(PipelineCommand):
    help = "Per-feature change beliefs of every query, optionally re-localizing without the flagged features."
    name = "detect"

    def add_command_arguments(self, parser):
        parser.add_argument("--rfm", required=True, help="RFM container written by build_rfm.")
        parser.add_argument("--queries", required=True, help="Query dataset CSV; x,y hold the ground truth.")
        parser.add_argument(
            "--at-truth",
            action="store_true",
            help="Compare against the expected fingerprint at the true location instead of the robust estimate.",
        )
        parser.add_argument(
            "--relocate",
            action="store_true",
            help="Also write relocated.csv: kNN with the flagged features dropped.",
        )

    def run(self, config, out_dir: Path, options) -> RunResult:
        rfm_path = self.input_path(options, "rfm")
        queries_path = self.input_path(options, "queries")
        model = load_rfm(rfm_path)
        grid = model.require_grid()
        source = model.expected_source()
        queries = read_dataset(queries_path)
        pos_cfg, res_cfg = config.positioning_config(), config.resample_config()
        variability = config.variability_model()
        threshold = config["DETECTION_THRESHOLD"]
        lambda_mji = config["CANDIDATE_LAMBDA_MJI"]
        at_truth = bool(options.get("at_truth"))
        relocate = bool(options.get("relocate"))

        def process(item):
            index, sample = item
            cfg = replace(res_cfg, seed=query_seed(config.seed, index))
            if at_truth:
                location = sample.location
            else:
                location = robust_locate(
                    sample.fingerprint, grid, source, pos_cfg, cfg, lambda_mji,
                    params=model.params, query=model.query,
                ).location
            beliefs = detect_changes(
                sample.fingerprint, location, source, variability, params=model.params, query=model.query,
            )
            relocated = None
            if relocate:
                relocated = drop_changed_and_relocate(
                    sample.fingerprint, beliefs, grid, pos_cfg, threshold,
                    rfm=source, res_cfg=cfg, lambda_mji=lambda_mji, params=model.params, query=model.query,
                )
            return beliefs, relocated

        results = ordered_map(process, list(enumerate(queries.samples)), config.workers)

        belief_rows, relocated_rows = [], []
        for sample_id, sample, (beliefs, relocated) in zip(queries.sample_ids, queries.samples, results):
            for feature, belief in beliefs.items():
                belief_rows.append({
                    "sample_id": sample_id,
                    "feature_id": feature,
                    "belief": belief,
                    "flagged": int(belief >= threshold),
                })
            if relocated is not None:
                relocated_rows.append(estimate_row(sample_id, relocated.location, sample.location))

        outputs = [write_table(out_dir / "beliefs.csv", belief_rows, BELIEF_COLUMNS)]
        if relocate:
            outputs.append(write_table(out_dir / "relocated.csv", relocated_rows, ESTIMATE_COLUMNS))
        return RunResult(inputs={"rfm": rfm_path, "queries": queries_path}, outputs=outputs)
