"""
Report service: JSON, CSV and solution-dump outputs of a run
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

from src.data.dataset import Dataset, write_encoding
from src.experiment.services.analysis_service import find_difference_pairs
from src.experiment.services.runner_service import AttackReport, TargetResult
from src.qbs.query import Query, ops_from_text, ops_to_text

logger = logging.getLogger(__name__)


class ReportService:
    """Service writing run artifacts under one output directory"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    def write(self, report: AttackReport) -> Dict[str, str]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": self.out_dir / "report.json",
            "csv": self.out_dir / "report.csv",
            "config": self.out_dir / "resolved_config.json",
            "generations": self.out_dir / "generations.csv",
        }
        paths["report"].write_text(json.dumps(report.to_dict(), indent=2))
        paths["config"].write_text(json.dumps(report.config, indent=2))
        self._results_frame(report.results).to_csv(paths["csv"], index=False)
        self._generations_frame(report.results).to_csv(paths["generations"], index=False)

        solutions_dir = self.out_dir / "solutions"
        for result in report.results:
            if result.solution:
                solutions_dir.mkdir(exist_ok=True)
                path = solutions_dir / f"rep{result.repetition}-target{result.target_index}.txt"
                path.write_text(self.format_solution(result))

        logger.info(f"Wrote report for {len(report.results)} targets to {self.out_dir}")
        return {name: str(path) for name, path in paths.items()}

    def write_encoding(self, dataset: Dataset) -> str:
        """Persist the CSV value dictionaries next to the report"""
        path = self.out_dir / "encoding.json"
        write_encoding(dataset, path)
        return str(path)

    def write_sweep(self, rows: List[Dict[str, Any]]) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows).to_csv(self.out_dir / "sweep.csv", index=False)
        (self.out_dir / "sweep.json").write_text(json.dumps(rows, indent=2))

    @staticmethod
    def _results_frame(results: List[TargetResult]) -> pd.DataFrame:
        return pd.DataFrame([
            {
                "repetition": r.repetition,
                "target_index": r.target_index,
                "known_values": " ".join(str(v) for v in r.known_values),
                "strategy": r.strategy,
                "fitness": r.fitness,
                "train_accuracy": r.train_accuracy,
                "val_accuracy": r.val_accuracy,
                "test_accuracy": r.test_accuracy,
                "abstentions": r.abstentions,
                "generations": len(r.history),
                "runtime_seconds": round(r.runtime_seconds, 3),
            }
            for r in results
        ])

    @staticmethod
    def _generations_frame(results: List[TargetResult]) -> pd.DataFrame:
        rows = [
            {"repetition": r.repetition, "target_index": r.target_index, **h}
            for r in results
            for h in r.history
        ]
        return pd.DataFrame(rows, columns=["repetition", "target_index", "generation", "best_fitness", "mean_fitness"])

    @staticmethod
    def format_solution(result: TargetResult) -> str:
        """Distinct queries with multiplicities, difference-pair queries first"""
        counts: Dict[str, int] = {}
        for line in result.solution:
            counts[line] = counts.get(line, 0) + 1
        distinct = list(counts)
        queries = [Query.bind(ops_from_text(text), result.known_values) for text in distinct]
        in_pairs = sorted({i for pair in find_difference_pairs(queries) for i in pair})
        rest = [i for i in range(len(distinct)) if i not in set(in_pairs)]

        lines = [
            f"# repetition {result.repetition} target {result.target_index} "
            f"known values {result.known_values}",
            f"# test accuracy {result.test_accuracy:.4f}",
        ]
        if in_pairs:
            lines.append("# difference queries")
            lines += [f"{counts[distinct[i]]:>4} x {ops_to_text(queries[i].ops)}" for i in in_pairs]
        lines.append("# other queries")
        lines += [f"{counts[distinct[i]]:>4} x {ops_to_text(queries[i].ops)}" for i in rest]
        return "\n".join(lines) + "\n"
