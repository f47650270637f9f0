"""Adversarial learned augmentation: experiment running and inference."""

from ._advaug import (
    CODE_VERSION,
    __version__,
    config_hash,
    describe,
    export_samples,
    group_hash,
    load_results,
    materialize,
    report,
    run_experiment,
    stn,
    transform,
)

__all__ = [
    "CODE_VERSION",
    "__version__",
    "config_hash",
    "describe",
    "export_samples",
    "group_hash",
    "load_results",
    "materialize",
    "report",
    "run_experiment",
    "stn",
    "transform",
]
