# fingerprints/management/commands/localize.py
from pathlib import Path

from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.parallel import ordered_map
from fingerprints.services.positioning import knn_locate
from fingerprints.services.storage import ESTIMATE_COLUMNS, estimate_row, load_rfm, write_table


class Command(PipelineCommand):
    help = "Baseline kNN localization (euclidean or CDM) of every query against the grid RFM."
    name = "localize"

    def add_command_arguments(self, parser):
        parser.add_argument("--rfm", required=True, help="RFM container written by build_rfm.")
        parser.add_argument("--queries", required=True, help="Query dataset CSV; x,y hold the ground truth.")

    def run(self, config, out_dir: Path, options) -> RunResult:
        rfm_path = self.input_path(options, "rfm")
        queries_path = self.input_path(options, "queries")
        grid = load_rfm(rfm_path).require_grid()
        queries = read_dataset(queries_path)
        pos_cfg = config.positioning_config()

        estimates = ordered_map(
            lambda sample: knn_locate(sample.fingerprint, grid, pos_cfg),
            queries.samples,
            config.workers,
        )
        rows = [
            estimate_row(sample_id, estimate.location, sample.location)
            for sample_id, sample, estimate in zip(queries.sample_ids, queries.samples, estimates)
        ]
        out = write_table(out_dir / "estimates.csv", rows, ESTIMATE_COLUMNS)
        return RunResult(inputs={"rfm": rfm_path, "queries": queries_path}, outputs=[out])
