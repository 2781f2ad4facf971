"""
Experiment handler
Runs attacks, post-hoc analyses and mechanism diagnostics from command events
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config.experiment_config import ExperimentConfig
from src.config.preset_config import ConfigManager
from src.exceptions import ConfigError
from src.experiment.services.analysis_service import AnalysisService, qbs_diagnostics
from src.experiment.services.report_service import ReportService
from src.experiment.services.runner_service import RunnerService, default_workers
from src.utils.log_config import configure_logging

logger = logging.getLogger(__name__)


def handler(event: Dict[str, Any], context: Optional[Any] = None) -> Dict[str, Any]:
    """Main handler dispatching on event['command']"""
    try:
        command = event.get("command")
        if command == "run":
            return _process_run(event)
        elif command == "analyze":
            return _process_analyze(event)
        elif command == "qbs-stats":
            return _process_qbs_stats(event)
        else:
            logger.warning(f"Unknown command: {command}")
            return {"statusCode": 400, "body": json.dumps({"error": f"Unknown command: {command}"})}

    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return {"statusCode": 400, "body": json.dumps({"error": str(e)})}
    except Exception as e:
        logger.error(f"Error processing {event.get('command')}: {str(e)}", exc_info=True)
        return {"statusCode": 500, "body": json.dumps({"error": str(e)})}


def _load(event: Dict[str, Any]) -> ExperimentConfig:
    if not event.get("config"):
        raise ConfigError("A --config file is required")
    config = ConfigManager.load_config(event["config"])
    preset = event.get("preset") or ConfigManager.get_current_preset()
    if preset:
        try:
            config = ConfigManager.apply_preset(config, preset)
        except ValueError as e:
            raise ConfigError(f"Unknown preset '{preset}'") from e
    configure_logging(config.logging)
    return config


def _with_m(config: ExperimentConfig, m: int) -> ExperimentConfig:
    data = config.model_dump()
    data["search"]["m"] = m
    try:
        return ExperimentConfig.model_validate(data)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _process_run(event: Dict[str, Any]):
    """Run one experiment, or one per requested solution size"""
    config = _load(event)
    workers = int(event.get("workers") or default_workers())
    out_dir = Path(event.get("out") or "runs/latest")
    sizes: List[int] = event.get("m") or []

    if not sizes:
        runner = RunnerService(config)
        report = runner.run_experiment(workers)
        reports = ReportService(out_dir)
        paths = reports.write(report)
        if config.dataset.path is not None:
            paths["encoding"] = reports.write_encoding(runner.fleets.load_source())
        return {
            "statusCode": 200,
            "body": json.dumps({
                "message": "Experiment completed",
                "qbs": report.qbs,
                "mean_accuracy": report.aggregate["mean_accuracy"],
                "std_over_repetitions": report.aggregate["std_over_repetitions"],
                "outputs": paths,
            }),
        }

    rows = []
    for m in sizes:
        report = RunnerService(_with_m(config, m)).run_experiment(workers)
        ReportService(out_dir / f"m{m}").write(report)
        rows.append({"m": m, **{k: v for k, v in report.aggregate.items() if k != "percentiles"}})
    ReportService(out_dir).write_sweep(rows)
    return {
        "statusCode": 200,
        "body": json.dumps({"message": "Sweep completed", "rows": rows, "out": str(out_dir)}),
    }


def _process_analyze(event: Dict[str, Any]):
    """Difference-query analysis of a finished run"""
    run_dir = event.get("run")
    if not run_dir or not (Path(run_dir) / "resolved_config.json").exists():
        raise ConfigError(f"No finished run found at {run_dir}")
    service = AnalysisService(run_dir)
    configure_logging(service.load_config().logging)
    summary = service.analyze()
    return {
        "statusCode": 200,
        "body": json.dumps({
            "message": "Analysis completed",
            "targets": len(summary["targets"]),
            "mean_acc_diff_only": summary["mean_acc_diff_only"],
            "mean_acc_random_subset": summary["mean_acc_random_subset"],
        }),
    }


def _process_qbs_stats(event: Dict[str, Any]):
    """Noise and suppression diagnostics for the configured mechanism"""
    config = _load(event)
    stats = qbs_diagnostics(config, int(event.get("trials") or 2000))
    return {"statusCode": 200, "body": json.dumps(stats)}
