"""Plain-text ``key = value`` configuration files.

Model keys are the ModelParams field names.  Run keys (``experiment``,
``seeds``, ``seed``, ``jobs``, ``horizon``) shape the experiment, keys of
the form ``axis.<field>`` give a comma-separated grid axis, and
``option.<name>`` passes an experiment option.  Blank lines and ``#``
comments are ignored.  Any other key is rejected.
"""

import json
from pathlib import Path

from .abm import parse_intervention
from .errors import ConfigError, UnknownKey
from .experiments import KINDS, ExperimentSpec, with_horizon
from .params import FIELD_TYPES, ModelParams

RUN_KEYS = ("experiment", "seeds", "seed", "jobs", "horizon")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_float(field, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(field, f"expected a number, got {text!r}") from None


def _parse_int(field, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(field, f"expected an integer, got {text!r}") from None


def _parse_bool(field, text):
    low = text.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(field, f"expected a boolean, got {text!r}")


def parse_field(field, text):
    kind = FIELD_TYPES[field]
    if kind is float:
        return _parse_float(field, text)
    if kind is int:
        return _parse_int(field, text)
    if kind is bool:
        return _parse_bool(field, text)
    if kind is str:
        return text
    # optional float
    if text.lower() in ("none", ""):
        return None
    return _parse_float(field, text)


def _parse_option(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_arms(text):
    try:
        return tuple(parse_intervention(a) for a in _split_arms(text))
    except ValueError as exc:
        raise ConfigError("option.arms", str(exc)) from None


def _split_arms(text):
    # commas inside parentheses belong to an arm, not the list
    out, depth, cur = [], 0, ""
    for ch in text:
        depth += (ch == "(") - (ch == ")")
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    return [a for a in (out + [cur]) if a.strip()]


def read_pairs(path):
    pairs = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(key, f"duplicate key on line {n}")
        pairs[key] = value
    return pairs


def load_config(path, overrides=None):
    """Validated (ModelParams, ExperimentSpec) from a key-value file.

    ``overrides`` (already-typed values, e.g. from CLI flags) win over the
    file.  Unset model keys take the calibrated defaults.
    """
    pairs = read_pairs(path) if path is not None else {}
    model, axes, options, run = {}, {}, {}, {}
    for key, value in pairs.items():
        if key in FIELD_TYPES:
            model[key] = parse_field(key, value)
        elif key.startswith("axis."):
            name = key[5:]
            if name not in FIELD_TYPES:
                raise UnknownKey(key)
            axes[name] = tuple(parse_field(name, v.strip()) for v in value.split(","))
        elif key.startswith("option."):
            options[key[7:]] = _parse_option(value)
            if key == "option.arms":
                options["arms"] = _parse_arms(value)
        elif key in RUN_KEYS:
            run[key] = value
        else:
            raise UnknownKey(key)
    for key, value in (overrides or {}).items():
        if value is not None:
            run[key] = value

    params = ModelParams(**model)
    horizon = run.get("horizon")
    if horizon is not None:
        params = with_horizon(params, str(horizon))
    kind = str(run.get("experiment", "calibration"))
    if kind not in KINDS:
        raise ConfigError("experiment", f"unknown experiment {kind!r}; choose from {', '.join(KINDS)}")
    spec = ExperimentSpec(
        kind=kind, base=params, axes=axes, options=options,
        seeds=_parse_int("seeds", str(run.get("seeds", 20))),
        master_seed=_parse_int("seed", str(run.get("seed", 0))),
        jobs=_parse_int("jobs", str(run.get("jobs", 1))),
    )
    if spec.jobs < 1:
        raise ConfigError("jobs", "must be >= 1")
    return params, spec
