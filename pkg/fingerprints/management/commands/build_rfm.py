# fingerprints/management/commands/build_rfm.py
from pathlib import Path

from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.ingestion import ingest
from fingerprints.services.kernel import Bounds, interpolate_grid, smooth_dataset
from fingerprints.services.storage import RfmModel, save_rfm


def parse_roi(text: str) -> Bounds:
    try:
        xmin, ymin, xmax, ymax = (float(v) for v in text.split(","))
    except ValueError:
        raise InvalidInputError(f"--roi expects xmin,ymin,xmax,ymax, got '{text}'.") from None
    return Bounds(xmin, ymin, xmax, ymax)


class Command(PipelineCommand):
    help = "Smooth a training dataset with kernel smoothing, interpolate the grid RFM and save rfm.zip."
    name = "build_rfm"

    def add_command_arguments(self, parser):
        parser.add_argument("--training", required=True, help="Training dataset CSV (wide or long).")
        parser.add_argument(
            "--roi",
            help="xmin,ymin,xmax,ymax of the grid. Default: the survey extent plus half a grid cell.",
        )
        parser.add_argument(
            "--no-smooth",
            action="store_true",
            help="Store and interpolate the raw training values.",
        )

    def run(self, config, out_dir: Path, options) -> RunResult:
        training_path = self.input_path(options, "training")
        params, query = config.kernel_params(), config.query_config()
        spacing = config["GRID_SPACING"]

        training = ingest(training_path)
        if not options.get("no_smooth"):
            training = smooth_dataset(training, params, query, workers=config.workers)

        if options.get("roi"):
            roi = parse_roi(options["roi"])
        else:
            roi = training.bounds.expanded(spacing / 2.0)
        grid = interpolate_grid(training, roi, params, query, spacing, workers=config.workers)

        rfm_path = save_rfm(out_dir / "rfm.zip", RfmModel(training, params, query, grid))
        return RunResult(inputs={"training": training_path}, outputs=[rfm_path])
