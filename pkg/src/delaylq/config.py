"""Flat sectioned key-value run configuration.

INI-style files parsed with configparser; CLI flags override file keys.
``render_config`` produces a canonical text form (sorted sections and
keys) used both for the manifest's config hash and to make any run
re-creatable from its manifest alone.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os

from .errors import ParameterError

ConfigDict = dict[str, dict[str, str]]

KINDS = ("single", "two-asset", "markowitz", "markowitz2")


def parse_config(path: str | os.PathLike) -> ConfigDict:
    if not os.path.exists(path):
        raise ParameterError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive (T vs t)
    try:
        with open(path) as fh:
            cp.read_file(fh, source=str(path))
    except configparser.Error as exc:
        raise ParameterError(f"config parse error: {exc}") from None
    return {sec: dict(cp.items(sec)) for sec in cp.sections()}


def render_config(cfg: ConfigDict) -> str:
    buf = io.StringIO()
    for sec in sorted(cfg):
        buf.write(f"[{sec}]\n")
        for key in sorted(cfg[sec]):
            buf.write(f"{key} = {cfg[sec][key]}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg: ConfigDict) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()


def get_str(cfg: ConfigDict, section: str, key: str,
            default: str | None = None) -> str:
    sec = cfg.get(section, {})
    if key in sec:
        return sec[key]
    if default is not None:
        return default
    raise ParameterError(f"missing config key [{section}] {key}")


def get_float(cfg: ConfigDict, section: str, key: str,
              default: float | None = None) -> float:
    sec = cfg.get(section, {})
    if key not in sec:
        if default is not None:
            return default
        raise ParameterError(f"missing config key [{section}] {key}")
    try:
        return float(sec[key])
    except ValueError:
        raise ParameterError(
            f"config key [{section}] {key} = {sec[key]!r} is not a number") from None


def get_int(cfg: ConfigDict, section: str, key: str,
            default: int | None = None) -> int:
    v = get_float(cfg, section, key, default)
    if v != int(v):
        raise ParameterError(f"config key [{section}] {key} must be an integer")
    return int(v)


def get_bool(cfg: ConfigDict, section: str, key: str, default: bool) -> bool:
    sec = cfg.get(section, {})
    if key not in sec:
        return default
    v = sec[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"config key [{section}] {key} = {sec[key]!r} "
                         "is not a boolean")


def get_float_list(cfg: ConfigDict, section: str, key: str) -> list[float]:
    raw = get_str(cfg, section, key)
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ParameterError(
            f"config key [{section}] {key} = {raw!r} is not a number list") from None


def set_key(cfg: ConfigDict, section: str, key: str, value) -> None:
    cfg.setdefault(section, {})[key] = str(value)
