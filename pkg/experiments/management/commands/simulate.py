# experiments/management/commands/simulate.py
from pathlib import Path

from experiments.services.protocols import scenario_from_config
from experiments.services.simulation import access_point_id, generate_scenario
from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.storage import write_dataset, write_key_values, write_table

ACCESS_POINT_COLUMNS = ("feature_id", "x", "y")


class Command(PipelineCommand):
    help = "Generate a synthetic path-loss scenario and split its survey into training and validation sets."
    name = "simulate"

    def run(self, config, out_dir: Path, options) -> RunResult:
        scenario = scenario_from_config(config)
        data = generate_scenario(scenario)

        scenario_keys = {key: value for key, value in config.as_dict().items() if key.startswith("SCENARIO_")}
        scenario_keys["SEED"] = config.seed
        access_points = [
            {"feature_id": access_point_id(i), "x": float(x), "y": float(y)}
            for i, (x, y) in enumerate(data.access_points)
        ]

        outputs = [
            write_dataset(out_dir / "training.csv", data.training.samples),
            write_dataset(out_dir / "validation.csv", data.validation.samples),
            write_key_values(out_dir / "scenario.env", scenario_keys),
            write_table(out_dir / "access_points.csv", access_points, ACCESS_POINT_COLUMNS),
        ]
        return RunResult(inputs={}, outputs=outputs)
