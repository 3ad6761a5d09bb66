"""Shared configuration loader for the explorer runs."""

import copy
import os
import sys

import yaml

_PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
_DEFAULT_CONFIG = os.path.join(_PROJECT_ROOT, "config.yaml")
_EXAMPLE_CONFIG = os.path.join(_PROJECT_ROOT, "config.example.yaml")


class ConfigError(ValueError):
    """Raised for unreadable, malformed or out-of-domain configuration."""


def project_root() -> str:
    return _PROJECT_ROOT


def _deep_merge(base: dict, override: dict) -> dict:
    """Recursively merge *override* into *base* (returns new dict)."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if key in merged and isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _set_dotted(target: dict, dotted: str, value) -> None:
    parts = [p.strip() for p in dotted.split(".")]
    if not all(parts):
        raise ConfigError(f"invalid key {dotted!r}")
    node = target
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"key {dotted!r} collides with scalar {part!r}")
        node = child
    node[parts[-1]] = value


def parse_flat(text: str) -> dict:
    """Parse the flat ``section.key = value`` format into a nested dict.

    Values are read as YAML scalars, so ``3000``, ``0.5``, ``true`` and
    ``null`` keep their types.  Duplicate keys are rejected.
    """
    data: dict = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            parsed = yaml.safe_load(value.strip()) if value.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        _set_dotted(data, key, parsed)
    return data


def parse_overrides(items: list[str] | None) -> dict:
    """Turn ``["lcp.budget=500", ...]`` into a nested override dict."""
    if not items:
        return {}
    return parse_flat("\n".join(items))


def _read(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return data
    return parse_flat(text)


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Load a YAML (or flat ``key = value``) config.

    Priority: *path* argument → ``EXPLORER_CONFIG`` → config.yaml →
    config.example.yaml.  An explicit *path* that does not exist is an error.
    """
    if path and not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    candidates = [
        path,
        os.environ.get("EXPLORER_CONFIG"),
        _DEFAULT_CONFIG,
        _EXAMPLE_CONFIG,
    ]
    chosen = None
    for c in candidates:
        if c and os.path.isfile(c):
            chosen = c
            break

    if chosen is None:
        print("WARNING: no config file found, using built-in defaults", file=sys.stderr)
        data = {}
    else:
        data = _read(chosen)
    if overrides:
        data = _deep_merge(data, overrides)
    return data
