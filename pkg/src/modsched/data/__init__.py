"""Bundled machine and loop fixtures."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path


def path(name: str) -> Path:
    """Filesystem path of a bundled fixture, e.g. ``path("toy5.json")``."""
    return Path(str(resources.files(__package__).joinpath(name)))


def load(name: str) -> dict:
    return json.loads(path(name).read_text())
