# experiments/management/commands/sweep.py
from pathlib import Path

import numpy as np

from experiments.services.protocols import ratios_from_config, run_ratio_sweep
from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.storage import load_rfm, write_json, write_table

SWEEP_COLUMNS = ("ratio", "mean_norm_dispersiveness", "mean_norm_bias", "mean_dispersiveness", "mean_bias")
BANDWIDTH_COLUMNS = ("sample_id", "alpha_l", "alpha_m", "alpha_r")


class Command(PipelineCommand):
    help = "Dispersiveness and bias of the intermediate locations across resampling ratios."
    name = "sweep"

    def add_command_arguments(self, parser):
        parser.add_argument("--rfm", required=True, help="RFM container written by build_rfm.")
        parser.add_argument("--queries", required=True, help="Query dataset CSV; x,y hold the ground truth.")

    def run(self, config, out_dir: Path, options) -> RunResult:
        rfm_path = self.input_path(options, "rfm")
        queries_path = self.input_path(options, "queries")
        grid = load_rfm(rfm_path).require_grid()
        queries = read_dataset(queries_path)

        result = run_ratio_sweep(
            [(s.fingerprint, s.location) for s in queries.samples],
            grid,
            config.positioning_config(),
            config.resample_config(),
            ratios_from_config(config),
            ellipse_scale=config["EVALUATION_ELLIPSE_SCALE"],
            workers=config.workers,
        )

        bandwidth_rows = [
            {"sample_id": sample_id, "alpha_l": left, "alpha_m": middle, "alpha_r": right}
            for sample_id, (left, middle, right) in zip(queries.sample_ids, result.bandwidths)
        ]
        best = min(result.rows, key=lambda row: row["mean_norm_bias"])
        summary = {
            "n_queries": len(queries.samples),
            "n_ratios": len(result.ratios),
            "best_ratio": best["ratio"],
            "best_mean_norm_bias": best["mean_norm_bias"],
        }
        if bandwidth_rows:
            widths = [row["alpha_r"] - row["alpha_l"] for row in bandwidth_rows]
            summary["median_alpha_m"] = float(np.median([row["alpha_m"] for row in bandwidth_rows]))
            summary["median_bandwidth"] = float(np.median(widths))

        outputs = [
            write_table(out_dir / "sweep.csv", result.rows, SWEEP_COLUMNS),
            write_table(out_dir / "bandwidth.csv", bandwidth_rows, BANDWIDTH_COLUMNS),
            write_json(out_dir / "summary.json", summary),
        ]
        return RunResult(inputs={"rfm": rfm_path, "queries": queries_path}, outputs=outputs)
