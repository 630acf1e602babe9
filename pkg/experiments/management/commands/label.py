# experiments/management/commands/label.py
import logging
from pathlib import Path

from experiments.services.labeling import label_dataset
from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.changes import fit_variability_from_samples
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.storage import write_key_values, write_table

logger = logging.getLogger(__name__)

BLOCK_STATS_COLUMNS = ("x", "y", "feature_id", "block", "mu", "sigma", "count")
BLOCK_LABEL_COLUMNS = ("x", "y", "feature_id", "block", "reference_block", "ratio", "status")
SAMPLE_LABEL_COLUMNS = ("sample_id", "feature_id", "value", "status")


class Command(PipelineCommand):
    help = "Label long-term block data (within and between time blocks) and fit the RSS variability model."
    name = "label"

    def add_command_arguments(self, parser):
        parser.add_argument("--data", required=True, help="Long-term dataset CSV with a block column.")

    def run(self, config, out_dir: Path, options) -> RunResult:
        data_path = self.input_path(options, "data")
        dataset = read_dataset(data_path)
        result = label_dataset(dataset.samples)

        stats_rows = [
            {
                "x": s.location[0], "y": s.location[1], "feature_id": s.feature, "block": s.block,
                "mu": s.mu, "sigma": s.sigma, "count": s.count,
            }
            for s in result.stats
        ]
        block_rows = [
            {
                "x": b.location[0], "y": b.location[1], "feature_id": b.feature, "block": b.block,
                "reference_block": b.reference_block, "ratio": b.ratio, "status": b.status,
            }
            for b in result.blocks
        ]
        sample_rows = [
            {
                "sample_id": dataset.sample_ids[s.sample_index], "feature_id": s.feature,
                "value": s.value, "status": s.status,
            }
            for s in result.samples
        ]
        outputs = [
            write_table(out_dir / "block_stats.csv", stats_rows, BLOCK_STATS_COLUMNS),
            write_table(out_dir / "block_labels.csv", block_rows, BLOCK_LABEL_COLUMNS),
            write_table(out_dir / "sample_labels.csv", sample_rows, SAMPLE_LABEL_COLUMNS),
        ]

        floor = config["DETECTION_SIGMA_FLOOR"]
        try:
            model = fit_variability_from_samples(dataset.samples, floor=floor)
        except InvalidInputError as exc:
            logger.warning("Variability model not fitted: %s", exc)
        else:
            outputs.append(write_key_values(out_dir / "variability.env", {
                "DETECTION_SLOPE": repr(model.slope),
                "DETECTION_INTERCEPT": repr(model.intercept),
                "DETECTION_SIGMA_FLOOR": repr(model.floor),
            }))
        return RunResult(inputs={"data": data_path}, outputs=outputs)
