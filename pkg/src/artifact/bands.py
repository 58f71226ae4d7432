"""Acceptance bands, loaded from the versioned data file shipped with the package."""

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

SUPPORTED_VERSION = 1


@dataclass(frozen=True)
class Band:
    lo: float = -math.inf
    hi: float = math.inf
    lo_open: bool = False
    hi_open: bool = False

    def contains(self, x):
        if x is None or (isinstance(x, float) and math.isnan(x)):
            return False
        above = x > self.lo if self.lo_open else x >= self.lo
        below = x < self.hi if self.hi_open else x <= self.hi
        return bool(above and below)

    def label(self):
        if math.isfinite(self.lo) and math.isfinite(self.hi):
            left = "(" if self.lo_open else "["
            right = ")" if self.hi_open else "]"
            return f"in {left}{self.lo:g}, {self.hi:g}{right}"
        if math.isfinite(self.lo):
            return f"{'>' if self.lo_open else '>='} {self.lo:g}"
        return f"{'<' if self.hi_open else '<='} {self.hi:g}"


def _from_json(blob):
    if blob.get("version") != SUPPORTED_VERSION:
        raise ValueError(f"unsupported acceptance-band version {blob.get('version')!r}")
    return {k: Band(**v) for k, v in blob["bands"].items()}


@lru_cache(maxsize=None)
def load_bands(path=None):
    if path is None:
        text = resources.files("artifact").joinpath("data/acceptance_bands.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return _from_json(json.loads(text))


def band(key):
    return load_bands()[key]


def check(name, key, value):
    """(label, passed) for ``value`` against the named band."""
    b = band(key)
    return f"{name} {b.label()}", b.contains(value)
