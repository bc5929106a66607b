from .config import ConfigError, RunConfig, load_config
from .experiment import RunManifest, load_manifest, run_experiment, train_seed

__all__ = ["ConfigError", "RunConfig", "RunManifest", "load_config", "load_manifest", "run_experiment", "train_seed"]
