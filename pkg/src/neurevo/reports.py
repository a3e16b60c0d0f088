"""Report emitters: Pareto front dump and per-generation accuracy curve.

Reports are plain data files; rendering is left to external tooling.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


class MissingArtifacts(Exception):
    pass


def write_reports(run_dir) -> tuple[Path, Path]:
    """Produce pareto.json and accuracy_curve.csv from a finished run directory."""
    run_dir = Path(run_dir)
    archive_path = run_dir / "archive.json"
    log_path = run_dir / "generation_log.csv"
    if not archive_path.exists() or not log_path.exists():
        raise MissingArtifacts(
            f"{run_dir} lacks archive.json or generation_log.csv")

    members = json.loads(archive_path.read_text())
    pareto_path = run_dir / "pareto.json"
    pareto_path.write_text(json.dumps(members, indent=2) + "\n")

    curve_path = run_dir / "accuracy_curve.csv"
    cumulative = 0
    with open(log_path, newline="") as fh, open(curve_path, "w", newline="") as out:
        reader = csv.DictReader(fh)
        writer = csv.writer(out)
        writer.writerow(["generation", "best_accuracy", "archive_size",
                         "evaluations_cumulative"])
        for row in reader:
            cumulative += int(row["evaluated"])
            writer.writerow([row["generation"],
                             repr(1.0 - float(row["best_error"])),
                             row["archive_size"], cumulative])
    return pareto_path, curve_path
