"""
End-to-end reproduction: train both networks, build the fitting-error
tables, forecast, replay the published parameters, and write report.csv
and report.md. Same as ``emufleet report --out-dir <dir>``.
"""

import sys
import tempfile
from pathlib import Path

from emufleet.data import load_bundled_dataset
from emufleet.pipeline import ExperimentConfig, report_to_csv, report_to_markdown, run_experiment

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="emufleet-"))
out_dir.mkdir(parents=True, exist_ok=True)

report = run_experiment(load_bundled_dataset(), ExperimentConfig(cnn_seed=0, bpnn_seed=0))
(out_dir / "report.csv").write_text(report_to_csv(report))
(out_dir / "report.md").write_text(report_to_markdown(report))

print(f"sum |error %|  CNN {report.cnn_abs_pct_sum:.2f}   BPNN {report.bpnn_abs_pct_sum:.2f}")
print("2016 holdout (predicted, actual):", report.holdout("cnn"), report.holdout("bpnn"))
print("written to", out_dir)
