"""Flat ``key=value`` text files used for every config in the pipeline."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Raised for an invalid configuration value; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(ValueError):
    """Raised for malformed input files, carrying a 1-based line number."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, lineno, f"expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ParseError(path, lineno, "empty key")
            out[key] = value
    return out


def write_kv(path, items: dict[str, object]) -> None:
    lines = [f"{k}={v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
