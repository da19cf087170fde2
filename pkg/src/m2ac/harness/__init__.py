"""Configuration, training loops, metrics and curves for experiments."""

from .config import (
    FULL_HORIZONS,
    PRESETS,
    STREAMS,
    ExperimentConfig,
    ModelSection,
    SacSection,
    full_preset,
    desk_preset,
    seed_streams,
    stream_rngs,
    unmasked,
)
from .metrics import MetricsRecord, MetricsWriter, emit_curves, merge_curves, read_run
from .runner import (
    ABLATION_AXES,
    RunResult,
    TrainingAborted,
    evaluate,
    model_free_baseline_train,
    run_ablation_suite,
    run_m2ac,
)
