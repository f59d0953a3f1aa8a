"""Minimal `[section]` / `key = value` config format shared by the catalog files.

Kept deliberately small so parse errors can point at the exact field and line,
which configparser does not do for semantic problems.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Malformed or invalid config content; message names the field and line."""


_REQUIRED = object()


def parse_sections(text: str, source: str = "<config>") -> dict[str, dict[str, tuple[str, int]]]:
    """Parse sectioned key/value text into {section: {key: (raw_value, line)}}."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: dict[str, tuple[str, int]] | None = None
    current_name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"{source}:{lineno}: empty section name")
            if name in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section '{name}'")
            current = {}
            current_name = name
            sections[name] = current
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key/value pair outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key before '='")
        if key in current:
            raise ConfigError(
                f"{source}:{lineno}: duplicate field '{key}' in section '{current_name}'"
            )
        current[key] = (value, lineno)
    return sections


class SectionReader:
    """Typed field access over one parsed section, with unknown-field rejection."""

    def __init__(self, name: str, fields: dict[str, tuple[str, int]], source: str = "<config>"):
        self.name = name
        self.source = source
        self._fields = fields
        self._seen: set[str] = set()

    def _raw(self, key, default):
        if key not in self._fields:
            if default is _REQUIRED:
                raise ConfigError(
                    f"{self.source}: section '{self.name}' is missing required field '{key}'"
                )
            return None
        self._seen.add(key)
        return self._fields[key]

    def get_str(self, key: str, default=_REQUIRED) -> str:
        raw = self._raw(key, default)
        if raw is None:
            return default
        return raw[0]

    def get_int(self, key: str, default=_REQUIRED) -> int:
        raw = self._raw(key, default)
        if raw is None:
            return default
        value, lineno = raw
        try:
            return int(value)
        except ValueError:
            raise ConfigError(
                f"{self.source}:{lineno}: field '{key}' must be an integer, got '{value}'"
            ) from None

    def get_float(self, key: str, default=_REQUIRED) -> float:
        raw = self._raw(key, default)
        if raw is None:
            return default
        value, lineno = raw
        try:
            return float(value)
        except ValueError:
            raise ConfigError(
                f"{self.source}:{lineno}: field '{key}' must be a number, got '{value}'"
            ) from None

    def get_bool(self, key: str, default=_REQUIRED) -> bool:
        raw = self._raw(key, default)
        if raw is None:
            return default
        value, lineno = raw
        lowered = value.lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ConfigError(
            f"{self.source}:{lineno}: field '{key}' must be a boolean, got '{value}'"
        )

    def reject_unknown(self) -> None:
        unknown = set(self._fields) - self._seen
        if unknown:
            key = sorted(unknown)[0]
            _, lineno = self._fields[key]
            raise ConfigError(
                f"{self.source}:{lineno}: unknown field '{key}' in section '{self.name}'"
            )
