"""Strict dataclass construction from JSON-style dicts."""

import dataclasses

from taen.errors import ConfigError


def dataclass_from_dict(cls, data, where=""):
    """Build a dataclass from a dict, rejecting unknown keys.

    Nested dataclass fields are built recursively from nested dicts.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{where or cls.__name__}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where or cls.__name__}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        target = ftype if dataclasses.is_dataclass(ftype) else None
        if target is not None and isinstance(value, dict):
            value = dataclass_from_dict(target, value, where=f"{where}.{name}" if where else name)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or cls.__name__}: {exc}") from exc


def dataclass_to_dict(obj):
    return dataclasses.asdict(obj)
