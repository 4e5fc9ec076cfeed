"""Flat ``key = value`` study configuration files.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored; keys are unique; unknown keys are errors. Lists are
comma-separated. A ``lo..hi`` item in an integer or time list expands to
every integer from lo to hi inclusive. Species and reaction indices are
1-based. A ``model`` path is resolved relative to the config file; the form
``builtin:<name>`` names a bundled model.

Scaling study keys::

    model, output, param, t_final, n_grid, n_samples, methods,
    seed (default 2024), h, slope_window (0.5), x0, truth (auto)

Time study keys::

    model, output, param, N, t_grid, n_samples, methods, seed (2024), h, x0

Output CSV files start with ``# key = value`` comment lines holding the
effective configuration; :func:`read_config_text` accepts such a file
directly, so a report can be regenerated from its own header.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

from .study import ScalingConfig, TimeStudyConfig

__all__ = ["ConfigError", "read_config_text", "load_scaling_config", "load_time_config",
           "scaling_config_lines", "time_config_lines", "DEFAULT_SEED"]

DEFAULT_SEED = 2024

_SCALING_KEYS = {"model", "output", "param", "t_final", "n_grid", "n_samples", "methods",
                 "seed", "h", "slope_window", "x0", "truth"}
_SCALING_REQUIRED = {"model", "output", "param", "t_final", "n_grid", "n_samples", "methods"}
_TIME_KEYS = {"model", "output", "param", "N", "t_grid", "n_samples", "methods", "seed", "h", "x0"}
_TIME_REQUIRED = {"model", "output", "param", "N", "t_grid", "n_samples", "methods"}


class ConfigError(ValueError):
    pass


def read_config_text(text: str, header: bool = False) -> dict[str, str]:
    """Parse key = value lines. With ``header`` set, read only leading
    ``# key = value`` comment lines (the header of an output CSV)."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw
        if header:
            if not line.startswith("#"):
                break
            line = line[1:]
        else:
            line = line.split("#", 1)[0]
        line = line.strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq:
            if header:
                continue
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def _ints(text):
    vals = []
    for item in text.split(","):
        item = item.strip()
        if ".." in item:
            lo, hi = item.split("..", 1)
            vals.extend(range(int(lo), int(hi) + 1))
        else:
            vals.append(int(item))
    return vals


def _floats(text):
    vals = []
    for item in text.split(","):
        item = item.strip()
        if ".." in item:
            lo, hi = item.split("..", 1)
            vals.extend(float(v) for v in range(int(lo), int(hi) + 1))
        else:
            vals.append(float(item))
    return vals


def _x0(text):
    return tuple(Fraction(v.strip()) for v in text.split(","))


def _model_ref(value: str, base: Path | None) -> str:
    if value.startswith("builtin:") or base is None:
        return value
    p = Path(value)
    return str(p if p.is_absolute() else (base / p))


def _check(kv, allowed, required):
    unknown = sorted(set(kv) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    missing = sorted(required - set(kv))
    if missing:
        raise ConfigError(f"missing key(s): {', '.join(missing)}")


def _source(path):
    path = Path(path)
    text = path.read_text()
    header = text.startswith("#") and "\n" in text and path.suffix == ".csv"
    return read_config_text(text, header=header), path.parent


def scaling_config_from_dict(kv: dict[str, str], base: Path | None = None) -> ScalingConfig:
    _check(kv, _SCALING_KEYS, _SCALING_REQUIRED)
    try:
        return ScalingConfig(
            model=_model_ref(kv["model"], base),
            output=kv["output"],
            param_index=int(kv["param"]) - 1,
            t_final=float(kv["t_final"]),
            n_grid=tuple(_ints(kv["n_grid"])),
            n_samples=int(kv["n_samples"]),
            methods=tuple(m.strip() for m in kv["methods"].split(",")),
            seed=int(kv.get("seed", DEFAULT_SEED)),
            h=float(kv["h"]) if kv.get("h") else None,
            slope_window=float(kv.get("slope_window", 0.5)),
            x0=_x0(kv["x0"]) if kv.get("x0") else None,
            truth=kv.get("truth", "auto"),
        )
    except (ValueError, KeyError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc


def time_config_from_dict(kv: dict[str, str], base: Path | None = None) -> TimeStudyConfig:
    _check(kv, _TIME_KEYS, _TIME_REQUIRED)
    try:
        return TimeStudyConfig(
            model=_model_ref(kv["model"], base),
            output=kv["output"],
            param_index=int(kv["param"]) - 1,
            N=int(kv["N"]),
            t_grid=tuple(_floats(kv["t_grid"])),
            n_samples=int(kv["n_samples"]),
            methods=tuple(m.strip() for m in kv["methods"].split(",")),
            seed=int(kv.get("seed", DEFAULT_SEED)),
            h=float(kv["h"]) if kv.get("h") else None,
            x0=_x0(kv["x0"]) if kv.get("x0") else None,
        )
    except (ValueError, KeyError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scaling_config(path) -> ScalingConfig:
    kv, base = _source(path)
    return scaling_config_from_dict(kv, base)


def load_time_config(path) -> TimeStudyConfig:
    kv, base = _source(path)
    return time_config_from_dict(kv, base)


def _join(vals):
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in vals)


def scaling_config_lines(cfg: ScalingConfig) -> list[str]:
    """Effective configuration as ``key = value`` lines (round-trips)."""
    lines = [
        f"model = {cfg.model}",
        f"output = {cfg.output}",
        f"param = {cfg.param_index + 1}",
        f"t_final = {cfg.t_final!r}",
        f"n_grid = {_join(cfg.n_grid)}",
        f"n_samples = {cfg.n_samples}",
        f"methods = {','.join(m.value for m in cfg.methods)}",
        f"seed = {cfg.seed}",
    ]
    if cfg.h is not None:
        lines.append(f"h = {cfg.h!r}")
    lines.append(f"slope_window = {cfg.slope_window!r}")
    if cfg.x0 is not None:
        lines.append(f"x0 = {_join(cfg.x0)}")
    lines.append(f"truth = {cfg.truth}")
    return lines


def time_config_lines(cfg: TimeStudyConfig) -> list[str]:
    lines = [
        f"model = {cfg.model}",
        f"output = {cfg.output}",
        f"param = {cfg.param_index + 1}",
        f"N = {cfg.N}",
        f"t_grid = {_join(cfg.t_grid)}",
        f"n_samples = {cfg.n_samples}",
        f"methods = {','.join(m.value for m in cfg.methods)}",
        f"seed = {cfg.seed}",
    ]
    if cfg.h is not None:
        lines.append(f"h = {cfg.h!r}")
    if cfg.x0 is not None:
        lines.append(f"x0 = {_join(cfg.x0)}")
    return lines
