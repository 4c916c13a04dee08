"""
Run configuration loading.
Parses a TOML run file into the strict RunConfig model.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import structlog
from pydantic import ValidationError

from app.core.exceptions import ConfigNotFoundError, ConfigurationError
from app.schemas import RunConfig

logger = structlog.get_logger(__name__)


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"{location}: {first['msg']}"


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    """Validate TOML text; the first failing field is named in the error."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source} is not valid TOML: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(
            f"{source} failed validation ({exc.error_count()} errors), {_describe(exc)}"
        ) from exc


def load_run_config(path: Path) -> tuple[RunConfig, str]:
    """Load a run config file; returns the model and the verbatim text."""
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    config = parse_run_config(text, str(path))
    logger.debug("Run config loaded", path=str(path), seed=config.seed)
    return config, text
