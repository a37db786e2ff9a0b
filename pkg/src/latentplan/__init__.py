"""latentplan: a transformer latent world model trained jointly with policy and
value heads, planned over with Monte Carlo Tree Search, at desk scale."""

__version__ = "0.1.0"

from .experiment import (  # noqa: E402
    ExperimentConfig,
    IntegrityError,
    evaluate_checkpoint,
    inspect_checkpoint,
    load_checkpoint,
    load_config_file,
    parse_config,
    resolve_checkpoint,
    run_experiment,
    save_checkpoint,
)

__all__ = [
    "ExperimentConfig", "IntegrityError", "evaluate_checkpoint", "inspect_checkpoint",
    "load_checkpoint", "load_config_file", "parse_config", "resolve_checkpoint",
    "run_experiment", "save_checkpoint", "__version__",
]
