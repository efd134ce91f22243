"""Flat ``key = value`` experiment configuration.

One assignment per line; ``#`` starts a comment. Lists are comma separated.
Unknown keys are errors in strict mode and warnings otherwise. Every error
names the offending key and its line.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigError

EXPERIMENTS = ("ser_vs_snr", "acc_vs_degree", "layering_ablation", "imitation_toy",
               "fed_noniid", "fed_servers", "bound_check", "constellation")


def _ints(v):
    return tuple(int(x) for x in v)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = ""
    seeds: tuple = (0,)
    out: str = "results"
    full: bool = False
    # datasets; empty means the seeded synthetic stand-in
    triples: str = ""
    cora_content: str = ""
    cora_cites: str = ""
    citeseer_content: str = ""
    citeseer_cites: str = ""
    # graph and paths
    n_entities: int = 2000
    thresholds: tuple = (50, 6)
    n_paths: int = 600
    max_len: int = 4
    # codec
    dim: int = 16
    epochs: int = 200
    codec_lr: float = 0.01
    margin: float = 1.0
    negatives: int = 5
    batch_size: int = 128
    max_relation_norm: float = 1.0
    # channel and decoder
    snr_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0)
    fading: str = "unit"
    second_hop_snr_db: float = math.inf
    alpha: float = 0.7
    degree_snr_db: tuple = (2.0, 8.0)
    ablation_snr_db: float = 2.0
    layer_counts: tuple = (1, 2, 3, 4, 5)
    constellation_snr_db: float = 8.0
    # imitation
    lam: float = 1e-2
    J: int = 2
    rollouts: int = 64
    policy_lr: float = 0.01
    evaluator_lr: float = 0.01
    updates: int = 2000
    # federation
    servers: int = 6
    local_steps: int = 1
    rounds: int = 600
    noniid_p: tuple = (0.0, 1.0)
    server_counts: tuple = (2, 3, 4, 5, 6)
    datasets: tuple = ("cora", "citeseer")
    gcn_lr: float = 20.0
    n_val: int = 500
    topic_weight: float = 0.1
    target_accuracy: float = 0.8
    # bound suite
    bound_servers: int = 4
    bound_dim: int = 5
    bound_steps: int = 2000
    bound_noise: float = 0.5

    def validate(self):
        errs = []
        if self.experiment and self.experiment not in EXPERIMENTS:
            errs.append(("experiment", None, f"unknown experiment {self.experiment!r}"))
        if not self.seeds:
            errs.append(("seeds", None, "need at least one seed"))
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])) or \
                any(t <= 0 for t in self.thresholds):
            errs.append(("thresholds", None, "must be positive and strictly descending"))
        if not 0.0 <= self.alpha <= 1.0:
            errs.append(("alpha", None, "must lie in [0, 1]"))
        if any(not 0.0 <= p <= 1.0 for p in self.noniid_p):
            errs.append(("noniid_p", None, "values must lie in [0, 1]"))
        for name in ("local_steps", "servers", "rounds", "n_entities", "n_paths", "max_len", "dim",
                     "J", "rollouts", "updates", "bound_servers", "bound_dim", "bound_steps"):
            if getattr(self, name) < 1:
                errs.append((name, None, "must be >= 1"))
        if self.epochs < 0:
            errs.append(("epochs", None, "must be >= 0"))
        if any(math.isnan(s) for s in self.snr_db):
            errs.append(("snr_db", None, "must be numbers"))
        if any(k < 1 for k in self.server_counts) or any(n < 1 for n in self.layer_counts):
            errs.append(("server_counts", None, "counts must be >= 1"))
        if any(d not in ("cora", "citeseer") for d in self.datasets):
            errs.append(("datasets", None, "entries must be cora or citeseer"))
        if errs:
            raise ConfigError(_format(errs), errors=errs)
        return self

    def serialize(self):
        """Canonical text form (sorted keys); the manifest hash covers it."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {_render(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _float(text):
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    v = float(t)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


# key -> parser from the raw text
_PARSERS = {}
for _f in fields(ExperimentConfig):
    d = _f.default
    if isinstance(d, bool):
        _PARSERS[_f.name] = _bool
    elif isinstance(d, int):
        _PARSERS[_f.name] = int
    elif isinstance(d, float):
        _PARSERS[_f.name] = _float
    elif isinstance(d, tuple):
        if d and isinstance(d[0], str):
            _PARSERS[_f.name] = lambda t: tuple(x.lower() for x in _split(t))
        elif d and isinstance(d[0], float):
            _PARSERS[_f.name] = lambda t: tuple(_float(x) for x in _split(t))
        else:
            _PARSERS[_f.name] = lambda t: _ints(_split(t))
    else:
        _PARSERS[_f.name] = str.strip

# CLI-friendly aliases
ALIASES = {"K": "servers", "E": "local_steps", "T": "rounds", "p": "noniid_p", "seed": "seeds",
           "lambda": "lam"}


def _format(errs):
    parts = []
    for key, line, msg in errs:
        where = f"line {line}: " if line is not None else ""
        parts.append(f"{where}{key}: {msg}")
    return "; ".join(parts)


@dataclass
class ParsedConfig:
    config: ExperimentConfig
    warnings: list = field(default_factory=list)
    sources: dict = field(default_factory=dict)   # key -> line number


def parse_text(text, strict=True, base=None):
    """Parse config text over ``base`` (defaults when ``None``).

    Raises:
        ConfigError: with ``.errors`` listing ``(key, line, message)``.
    """
    base = ExperimentConfig() if base is None else base
    values, errs, warns, src = {}, [], [], {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(("?", no, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in _PARSERS:
            (errs if strict else warns).append((key, no, "unknown key"))
            continue
        if key in src:
            errs.append((key, no, f"duplicate key (first set on line {src[key]})"))
            continue
        try:
            values[key] = _PARSERS[key](val)
        except (ValueError, TypeError) as exc:
            errs.append((key, no, f"bad value {val!r} ({exc})"))
            continue
        src[key] = no
    if errs:
        raise ConfigError(_format(errs), errors=errs)
    cfg = replace(base, **values)
    try:
        cfg.validate()
    except ConfigError as exc:
        # attach line numbers where the key came from the file
        fixed = [(k, src.get(k, l), m) for k, l, m in exc.errors]
        raise ConfigError(_format(fixed), errors=fixed) from None
    return ParsedConfig(cfg, warns, src)


def validate_config(path, strict=True):
    """Read, parse and validate a config file; fills every default."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}",
                          errors=[("config", None, str(exc))]) from exc
    return parse_text(text, strict=strict)


def override(cfg, **values):
    """Apply already-typed overrides (e.g. from CLI flags) and revalidate."""
    values = {k: v for k, v in values.items() if v is not None}
    return replace(cfg, **values).validate()
