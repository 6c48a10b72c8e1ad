"""Experiment configuration: INI files with ``key = value`` sections.

Layout::

    [distribution]          # the M law, same keys as the text form
    family = atom
    p0 = 0.3
    base.family = beta
    base.alpha = 1
    base.beta = 1

    [run]                   # shared by every command
    q = 1
    seed = 42

    [maxima-gof]            # read only by that command
    block_lens = 100 10000

Precedence, highest first: command-line flag, ``PERP_SEED`` (seed only),
the command's own section, ``[run]``, built-in default. Sections named
after other commands are ignored, so one file can drive every command.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass

from .errors import ConfigError, SpecError
from .mdist import format_spec, parse_spec

COMMANDS = ("simulate", "maxima-gof", "norming", "extremal-index", "tailcheck")
ALL = COMMANDS


def _int(text):
    v = float(text) if isinstance(text, str) and re.search(r"[eE.]", text) else text
    if isinstance(v, float):
        if not (math.isfinite(v) and v == int(v)):
            raise ValueError(f"not an integer: {text!r}")
        return int(v)
    return int(v)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv):
    def parse(text):
        if isinstance(text, (list, tuple)):
            items = text
        else:
            items = [t for t in re.split(r"[,\s]+", str(text).strip()) if t]
        if not items:
            raise ValueError("empty list")
        return [conv(t) for t in items]

    parse.__name__ = f"list_of_{conv.__name__}"
    return parse


def _choice(*options):
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    parse.__name__ = "choice"
    return parse


def _theta(text):
    t = str(text).strip()
    if t in ("theoretical", "estimated"):
        return t
    v = float(t)
    if not 0.0 < v <= 1.0:
        raise ValueError(f"must lie in (0, 1], got {v!r}")
    return v


def _positive(conv):
    def parse(text):
        v = conv(text)
        if not v > 0:
            raise ValueError(f"must be positive, got {v!r}")
        return v

    parse.__name__ = conv.__name__
    return parse


def _nonneg_int(text):
    v = _int(text)
    if v < 0:
        raise ValueError(f"must be >= 0, got {v!r}")
    return v


@dataclass(frozen=True)
class Param:
    conv: object
    default: object
    commands: tuple
    help: str


PARAMS = {
    "q": Param(_positive(float), 1.0, ALL, "additive constant q > 0"),
    "seed": Param(_nonneg_int, 0, ALL, "root seed (PERP_SEED overrides the file)"),
    "replicas": Param(_positive(_int), 1, ALL, "independent replicas"),
    "tolerance": Param(_positive(float), 1e-12, ALL, "product cutoff of the stationary series"),
    "max_terms": Param(_positive(_int), 10**6, ALL, "term cap of the stationary series"),
    "allow_counterexample": Param(_bool, False, ALL, "simulate laws that fail the validator"),
    "mode": Param(_choice("stationary", "maxima", "path"), "stationary", ("simulate",),
                  "stationary draws, block maxima, or path summaries"),
    "format": Param(_choice("csv", "binary"), "csv", ("simulate",), "sample file format"),
    "samples": Param(_positive(_int), {"simulate": 10**4, "tailcheck": 10**6}, ("simulate", "tailcheck"),
                     "stationary draws per replica"),
    "n": Param(_positive(_int), {"simulate": 10**4, "extremal-index": 10**6}, ("simulate", "extremal-index"),
               "path length per replica"),
    "block_len": Param(_positive(_int), {"simulate": 1000, "extremal-index": None},
                       ("simulate", "extremal-index"), "block length (blocks estimator default ceil(sqrt(n)))"),
    "n_blocks": Param(_positive(_int), {"simulate": 100, "maxima-gof": 2000}, ("simulate", "maxima-gof"),
                      "blocks of the longest length, per replica"),
    "block_lens": Param(_list(_positive(_int)), [100, 10000], ("maxima-gof",),
                        "block lengths; each must divide the largest"),
    "theta": Param(_theta, "estimated", ("maxima-gof",),
                   "extremal index of the norming: a number, 'theoretical' (1 - P(M=1)) or 'estimated'"),
    "x_grid": Param(_list(float), [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0], ("maxima-gof", "norming"),
                    "quantile grid of the empirical norming"),
    "best_fit": Param(_bool, False, ("maxima-gof",), "also report the KS-minimizing affine norming"),
    "log_n": Param(_positive(float), 100.0, ("norming",), "ln n"),
    "c0": Param(_positive(float), 1.0, ("norming",), "lower-bound constant c0"),
    "c1": Param(_positive(float), 1.0, ("norming",), "lower-bound constant c1"),
    "c2": Param(_positive(float), 1.0, ("norming",), "upper-bound constant c2"),
    "c3": Param(_positive(float), 1.0, ("norming",), "upper-bound constant c3"),
    "empirical_max_samples": Param(_nonneg_int, 10**7, ("norming",),
                                   "largest stationary sample drawn for the empirical norming (0 skips it)"),
    "percentile": Param(_positive(float), 99.5, ("extremal-index",), "threshold percentile of the path"),
    "estimator": Param(_choice("log", "ratio"), "log", ("extremal-index",), "blocks estimator variant"),
    "run_gap": Param(_positive(_int), 20, ("extremal-index",), "runs estimator gap"),
    "cond_percentiles": Param(_list(_positive(float)), [99.0, 99.5, 99.9], ("extremal-index",),
                              "threshold percentiles of the conditional probability"),
    "cond_samples": Param(_positive(_int), 10**4, ("extremal-index",), "conditioned draws per threshold"),
    "attempt_cap": Param(_positive(_int), 10**8, ("extremal-index",), "stationary draws allowed per threshold"),
    "constant_grid": Param(_list(_positive(float)), [0.25, 0.5, 1.0, 2.0, 4.0], ("tailcheck",),
                           "candidate tail-bound constants"),
    "y_points": Param(_positive(_int), 20, ("tailcheck",), "grid points between the 90% and 99.99% quantiles"),
}

DEFAULT_SPEC = "family=beta alpha=1 beta=1"


def params_for(command):
    return {k: p for k, p in PARAMS.items() if command in p.commands}


def _default(p, command):
    return p.default.get(command) if isinstance(p.default, dict) else p.default


def _line_numbers(path):
    """``(section, key) -> line`` for diagnostics; configparser does not keep them."""
    out = {}
    section = None
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            s = line.strip()
            m = re.match(r"\[([^\]]+)\]", s)
            if m:
                section = m.group(1).strip()
                continue
            m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
            if m and section is not None:
                out[(section, m.group(1).strip().lower())] = i
    return out


def _where(path, lines, section, key):
    ln = lines.get((section, key))
    return f"{path}:{ln}" if ln else f"{path} [{section}]"


def read_file(path, command):
    """``(spec_text or None, {key: value})`` from an INI file."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    lines = _line_numbers(path)
    known = set(COMMANDS) | {"run", "distribution"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"{path}: unknown section [{s}]; expected one of {', '.join(sorted(known))}")

    spec_text = None
    if cp.has_section("distribution"):
        items = dict(cp.items("distribution"))
        try:
            spec_text = format_spec(parse_spec(items))
        except SpecError as exc:
            raise ConfigError(f"{_where(path, lines, 'distribution', exc.field)}: {exc}") from exc

    allowed = params_for(command)
    values = {}
    for section in ("run", command):
        if not cp.has_section(section):
            continue
        for key, text in cp.items(section):
            if key not in PARAMS:
                raise ConfigError(f"{_where(path, lines, section, key)}: unknown key {key!r}")
            if key not in allowed:
                if section == command:
                    raise ConfigError(f"{_where(path, lines, section, key)}: {key!r} does not apply to {command}")
                continue
            try:
                values[key] = PARAMS[key].conv(text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{_where(path, lines, section, key)}: {key}: {exc}") from exc
    return spec_text, values


def resolve(command, config_path=None, spec_text=None, flags=None, environ=None):
    """Fully resolved configuration as a plain dict (JSON-ready)."""
    environ = os.environ if environ is None else environ
    values = {k: _default(p, command) for k, p in params_for(command).items()}
    file_spec = None
    if config_path is not None:
        file_spec, file_values = read_file(config_path, command)
        values.update(file_values)
    env_seed = environ.get("PERP_SEED")
    if env_seed not in (None, ""):
        try:
            values["seed"] = PARAMS["seed"].conv(env_seed)
        except ValueError as exc:
            raise ConfigError(f"PERP_SEED: {exc}") from exc
    for key, text in (flags or {}).items():
        if text is None:
            continue
        if key not in values:
            raise ConfigError(f"--{key.replace('_', '-')} does not apply to {command}")
        try:
            values[key] = PARAMS[key].conv(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from exc
    text = spec_text if spec_text is not None else (file_spec or DEFAULT_SPEC)
    try:
        values["distribution"] = format_spec(parse_spec(text))
    except SpecError as exc:
        raise ConfigError(f"distribution: {exc}") from exc
    values["command"] = command
    return values
