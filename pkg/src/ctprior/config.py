"""Flat config file format.

One ``dotted.key = value`` assignment per line; ``#`` starts a comment.
Values are parsed as JSON when possible (numbers, booleans, lists) and fall
back to bare strings, so ``schedule.kind = mixed`` and
``intervention.kind_probs = [0.6, 0.2, 0.2]`` both work. Keys mirror the
``BatchConfig`` model; unknown keys are rejected by validation.
"""
from __future__ import annotations

import json
from pathlib import Path

from pydantic import ValidationError

from .errors import ConfigurationError
from .pipeline import BatchConfig

__all__ = ["parse_flat", "format_flat", "load_batch_config", "dump_batch_config"]


def parse_flat(text: str) -> dict:
    root: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = root
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError(
                    f"line {lineno}: key {key!r} conflicts with scalar {part!r}")
            node = nxt
        leaf = parts[-1]
        if isinstance(node.get(leaf), dict):
            raise ConfigurationError(f"line {lineno}: key {key!r} conflicts with a section")
        node[leaf] = parsed
    return root


def _flatten(prefix: str, value, out: list[str]) -> None:
    if isinstance(value, dict):
        for key in value:
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], out)
    else:
        out.append(f"{prefix} = {json.dumps(value)}")


def format_flat(data: dict) -> str:
    lines: list[str] = []
    _flatten("", data, lines)
    return "\n".join(lines) + "\n"


def load_batch_config(path: str | Path | None = None, overrides: dict | None = None) -> BatchConfig:
    """Build a BatchConfig from an optional flat file plus overrides (shallow
    dotted-dict merge, overrides win)."""
    data: dict = {}
    if path is not None:
        data = parse_flat(Path(path).read_text(encoding="utf-8"))
    for key, value in (overrides or {}).items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    try:
        return BatchConfig(**data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {exc}") from exc


def dump_batch_config(cfg: BatchConfig) -> str:
    return format_flat(cfg.model_dump(mode="json"))
