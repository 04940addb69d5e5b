import os
from pathlib import Path
from typing import Any, Mapping

from dotenv import dotenv_values
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    app_name: str = "rpnmf"
    log_level: str = "INFO"
    output_dir: Path = Path("runs")

    # numerical guards
    eps: float = 1e-12
    dead_component_tol: float = 1e-12
    reinit_scale: float = 1e-3
    qr_rank_tol: float = 1e-12

    default_max_iterations: int = 500
    default_error_interval: int = 5
    default_rel_tolerance: float = 1e-6
    default_oversampling: int = 5
    default_power_iterations: int = 3
    default_seeds: list[int] = [1, 2, 3, 4, 5]
    default_jobs: int = 1
    max_jobs: int = max(1, os.cpu_count() or 1)

    model_config = SettingsConfigDict(env_prefix="RPNMF_", env_file=".env", env_file_encoding="utf-8")


settings = Settings()


def load_key_value_file(path: Path) -> dict[str, Any]:
    """Read a ``KEY=value`` config file into argparse destination names."""
    values: Mapping[str, str | None] = dotenv_values(path)
    return {key.strip().lower().lstrip("-").replace("-", "_"): value for key, value in values.items() if value is not None}
