# experiments/management/commands/evaluate.py
from pathlib import Path

from experiments.services.metrics import ecdf
from experiments.services.reports import (
    ECDF_COLUMNS,
    METRIC_COLUMNS,
    ROC_COLUMNS,
    detection_metrics,
    ecdf_rows,
    parse_labeled_path,
    positioning_metrics,
    read_beliefs,
    read_errors,
    read_labels,
    roc_rows,
    summarize,
)
from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.errors import InvalidInputError
from fingerprints.services.storage import write_json, write_table


class Command(PipelineCommand):
    help = "Positioning ECDF metrics from estimate files and ROC/AUC of change beliefs against labels."
    name = "evaluate"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--estimates",
            action="append",
            default=[],
            metavar="[NAME=]CSV",
            help="estimates.csv to score; repeatable. NAME defaults to the file stem.",
        )
        parser.add_argument("--beliefs", help="beliefs.csv written by detect.")
        parser.add_argument("--labels", help="labels_<tag>.csv written by inject.")

    def run(self, config, out_dir: Path, options) -> RunResult:
        estimates = [parse_labeled_path(text) for text in options.get("estimates") or ()]
        has_beliefs, has_labels = bool(options.get("beliefs")), bool(options.get("labels"))
        if has_beliefs != has_labels:
            raise InvalidInputError("--beliefs and --labels must be given together.")
        if not estimates and not has_beliefs:
            raise InvalidInputError("Nothing to evaluate: pass --estimates and/or --beliefs with --labels.")
        names = [name for name, _ in estimates]
        if len(set(names)) != len(names):
            raise InvalidInputError("Estimate files share a name; pass them as NAME=CSV.")

        radius = config["EVALUATION_RADIUS"]
        inputs, metric_rows, curve_rows, roc = {}, [], [], []
        for name, path in estimates:
            if not path.is_file():
                raise InvalidInputError(f"Input file '{path}' does not exist.")
            inputs[f"estimates:{name}"] = path
            errors = read_errors(path)
            metric_rows.extend(positioning_metrics(name, errors, radius))
            curve_rows.extend(ecdf_rows(name, ecdf(errors)))

        if has_beliefs:
            beliefs_path = self.input_path(options, "beliefs")
            labels_path = self.input_path(options, "labels")
            inputs.update(beliefs=beliefs_path, labels=labels_path)
            rows, curve = detection_metrics(
                read_beliefs(beliefs_path), read_labels(labels_path), config["DETECTION_THRESHOLD"],
            )
            metric_rows.extend(rows)
            roc = roc_rows(curve)

        summary = summarize(metric_rows)
        summary["radius"] = radius
        outputs = [
            write_table(out_dir / "metrics.csv", metric_rows, METRIC_COLUMNS),
            write_table(out_dir / "ecdf.csv", curve_rows, ECDF_COLUMNS),
            write_table(out_dir / "roc.csv", roc, ROC_COLUMNS),
            write_json(out_dir / "summary.json", summary),
        ]
        return RunResult(inputs=inputs, outputs=outputs)
