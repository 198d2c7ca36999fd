"""Metrics, experiment harness, ablation, significance testing and rendering."""

from .harness import EvalReport, evaluate_seed, run_ablation, run_all, run_experiment
from .metrics import ConfusionMatrix, MetricSet, compute_metrics, metrics_from_confusion, significance_test
from .render import render_report

__all__ = [
    "ConfusionMatrix",
    "EvalReport",
    "MetricSet",
    "compute_metrics",
    "evaluate_seed",
    "metrics_from_confusion",
    "render_report",
    "run_ablation",
    "run_all",
    "run_experiment",
    "significance_test",
]
