"""Experiment configuration: a small sectioned key-value format.

The format (documented in docs/config-format.md) is a strict subset of the
familiar sectioned style:

    # comment
    [section]
    key = value        # values: "string", integer, float, true/false,
    list = [1, 2.5]    #         arrays (possibly nested)
    [other.sub]
    nested = true

Parsing produces a nested dict; ``serialize`` emits a canonical rendering
(sorted sections and keys) such that parse(serialize(parse(text))) is
semantically identical to parse(text).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ContractViolationError

__all__ = [
    "parse_config",
    "parse_config_file",
    "serialize_config",
    "apply_override",
    "config_hash",
    "get_path",
]


class ConfigError(ContractViolationError):
    pass


# --------------------------------------------------------------------------
# value grammar


def _parse_value(text: str, where: str):
    text = text.strip()
    if not text:
        raise ConfigError(f"{where}: empty value")
    if text.startswith("["):
        value, end = _parse_array_at(text, 0, where)
        if text[end:].strip():
            raise ConfigError(f"{where}: trailing characters after array: {text[end:]!r}")
        return value
    return _parse_scalar(text, where)


def _parse_scalar(token: str, where: str):
    token = token.strip()
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {token!r}") from None


def _parse_array_at(text: str, i: int, where: str) -> tuple[list, int]:
    """Parse an array starting at text[i] == '['; return (items, index past ])."""
    i += 1
    items: list = []
    token = ""
    while i < len(text):
        ch = text[i]
        if ch == "[":
            if token.strip():
                raise ConfigError(f"{where}: unexpected '[' inside scalar")
            sub, i = _parse_array_at(text, i, where)
            items.append(sub)
            continue
        if ch == ",":
            if token.strip():
                items.append(_parse_scalar(token, where))
            token = ""
            i += 1
            continue
        if ch == "]":
            if token.strip():
                items.append(_parse_scalar(token, where))
            return items, i + 1
        token += ch
        i += 1
    raise ConfigError(f"{where}: unterminated array")


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out)


def parse_config(text: str) -> dict:
    config: dict = {}
    section = config
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        where = f"line {lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line!r}")
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"{where}: empty section name")
            section = config
            for part in name.split("."):
                section = section.setdefault(part, {})
                if not isinstance(section, dict):
                    raise ConfigError(f"{where}: section {name!r} collides with a key")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{where}: empty key")
        section[key] = _parse_value(value, where)
    return config


def parse_config_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


def serialize_config(config: dict) -> str:
    lines: list[str] = []

    def emit(section: dict, prefix: str):
        scalars = {k: v for k, v in section.items() if not isinstance(v, dict)}
        subs = {k: v for k, v in section.items() if isinstance(v, dict)}
        if prefix:
            lines.append(f"[{prefix}]")
        for key in sorted(scalars):
            lines.append(f"{key} = {_format_value(scalars[key])}")
        if prefix:
            lines.append("")
        for key in sorted(subs):
            emit(subs[key], f"{prefix}.{key}" if prefix else key)

    top_scalars = {k: v for k, v in config.items() if not isinstance(v, dict)}
    for key in sorted(top_scalars):
        lines.append(f"{key} = {_format_value(top_scalars[key])}")
    if top_scalars:
        lines.append("")
    for key in sorted(k for k, v in config.items() if isinstance(v, dict)):
        emit(config[key], key)
    return "\n".join(lines).rstrip() + "\n"


def apply_override(config: dict, assignment: str) -> None:
    """Apply a dotted-path override '--set section.key=value' in place."""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    path, _, value = assignment.partition("=")
    parts = [p for p in path.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override has empty key path: {assignment!r}")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r} collides with a scalar")
    node[parts[-1]] = _parse_value(value, f"override {path!r}")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def get_path(config: dict, dotted: str, default=None, required: bool = False):
    node = config
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"missing required config field {dotted!r}")
            return default
        node = node[part]
    return node
