"""Output-feedback tube MPC expert and tube-guided imitation learning."""

from ._tubeil import (
    ConfigError,
    Setup,
    config_hash,
    config_json,
    load_dataset,
    run_cli,
    solve_dare,
)

__all__ = ["ConfigError", "Setup", "config_hash", "config_json", "load_dataset", "run_cli", "solve_dare"]
