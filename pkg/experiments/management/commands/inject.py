# experiments/management/commands/inject.py
from pathlib import Path

from experiments.services.protocols import change_spec_from_config
from experiments.services.reports import LABEL_COLUMNS
from experiments.services.simulation import change_grid, inject_dataset, smooth_validation
from fingerprints.management.base import PipelineCommand, RunResult
from fingerprints.services.core import LabeledFingerprint
from fingerprints.services.ingestion import read_dataset
from fingerprints.services.storage import load_rfm, write_dataset, write_table

SPEC_COLUMNS = (
    "tag", "missing_ratio", "shift_ratio", "shift_dbm", "redraw_per_sample",
    "n_queries", "n_features", "n_changed",
)


class Command(PipelineCommand):
    help = "Inject simulated feature changes into the smoothed validation set (one spec or the whole grid)."
    name = "inject"

    def add_command_arguments(self, parser):
        parser.add_argument("--validation", required=True, help="Validation dataset CSV.")
        parser.add_argument("--rfm", required=True, help="RFM container whose training set smooths the validation data.")
        parser.add_argument(
            "--grid",
            action="store_true",
            help="Run every missing/shift/dBm combination instead of the CHANGE_* settings.",
        )

    def run(self, config, out_dir: Path, options) -> RunResult:
        validation_path = self.input_path(options, "validation")
        rfm_path = self.input_path(options, "rfm")
        model = load_rfm(rfm_path)
        validation = read_dataset(validation_path)

        baseline = smooth_validation(
            validation.samples, model.training, model.params, model.query, workers=config.workers,
        )
        if options.get("grid"):
            specs = change_grid(config.seed, config["CHANGE_REDRAW_PER_SAMPLE"])
        else:
            specs = [change_spec_from_config(config)]

        outputs, spec_rows = [], []
        for spec in specs:
            queries = inject_dataset(baseline, spec)
            sample_ids = [validation.sample_ids[q.sample_id] for q in queries]
            samples = [
                LabeledFingerprint(location=q.location, fingerprint=q.fingerprint, block=baseline[q.sample_id].block)
                for q in queries
            ]
            label_rows = [
                {"sample_id": sample_id, "feature_id": feature, "status": status, "kind": q.labels.kind.get(feature, "")}
                for sample_id, q in zip(sample_ids, queries)
                for feature, status in q.labels.status.items()
            ]
            outputs.append(write_dataset(out_dir / f"queries_{spec.tag}.csv", samples, sample_ids))
            outputs.append(write_table(out_dir / f"labels_{spec.tag}.csv", label_rows, LABEL_COLUMNS))
            spec_rows.append({
                "tag": spec.tag,
                "missing_ratio": spec.missing_ratio,
                "shift_ratio": spec.shift_ratio,
                "shift_dbm": spec.shift_dbm,
                "redraw_per_sample": int(spec.redraw_per_sample),
                "n_queries": len(queries),
                "n_features": len(label_rows),
                "n_changed": sum(len(q.labels.changed()) for q in queries),
            })

        outputs.append(write_table(out_dir / "specs.csv", spec_rows, SPEC_COLUMNS))
        return RunResult(inputs={"validation": validation_path, "rfm": rfm_path}, outputs=outputs)
