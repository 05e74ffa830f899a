"""Access to the prompt template files.

Templates are experimental inputs, not code: they ship with the package but
a config can point at an alternative directory, and run manifests record
their hashes so a run is attributable to the exact wording it used.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigError


def prompt_text(name: str, directory: Path | str | None = None) -> str:
    """Read one template by file name; packaged copy when no directory given."""
    if directory:
        path = Path(directory) / name
        if not path.is_file():
            raise ConfigError(f"prompt template {path} does not exist")
        text = path.read_text(encoding="utf-8")
    else:
        ref = resources.files("claimtrace").joinpath("prompts", name)
        if not ref.is_file():
            raise ConfigError(f"no packaged prompt template named {name!r}")
        text = ref.read_text(encoding="utf-8")
    if not text.strip():
        raise ConfigError(f"prompt template {name!r} is empty")
    return text
