"""Structured-text (YAML) documents: loading with line-anchored errors, and
normalized serialization used for round-trip checks."""

from __future__ import annotations

import json
from pathlib import Path

import yaml

from .errors import ConfigError


def parse_document(text: str, source: str | None = None) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ConfigError(exc.problem or str(exc), line=line, source=source) from None
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc), source=source) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", line=1, source=source)
    if "version" not in doc:
        raise ConfigError("missing mandatory 'version' field", line=1, source=source)
    return doc


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", source=str(path)) from None
    return parse_document(text, source=str(path))


def dump_document(doc: dict) -> str:
    """Normalized YAML: sorted keys, block style, floats in repr form."""
    return yaml.safe_dump(_plain(doc), sort_keys=True, default_flow_style=None, width=100)


def dump_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into plain YAML/JSON types."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj
