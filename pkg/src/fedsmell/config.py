"""Experiment configuration: strict INI parsing, defaults, resolved JSON.

Configs are flat key/value INI files with one section per concern.
Unknown sections or keys are rejected by name. A run echoes every
resolved value to config.resolved.json, and that file parses back into
the identical configuration, so any run can be reproduced from its
output directory alone.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .data import REBALANCE_MODES
from .errors import ConfigError, ParseError
from .federation import REDUCER_MODES

CENTRALIZED = "centralized"
CROSS_EVAL = "cross_eval"
FEDERATED = "federated"
SYNTH = "synth"
EXPERIMENT_KINDS = (CENTRALIZED, CROSS_EVAL, FEDERATED, SYNTH)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    datasets: tuple[str, ...]
    seed: int = 0
    out_dir: str = "out"
    rebalance: str = "oversample"
    test_fraction: float = 0.3
    chunks: tuple[int, ...] = ()
    combiner_clients: tuple[int, ...] = ()
    rounds: int = 100
    client_fraction: float = 1.0
    reducer_mode: str = "plain"
    learning_rate: float = 0.001
    batch_size: int = 32
    local_epochs: int = 1
    synth_samples: int = 2000
    synth_positive_rate: float = 0.5
    synth_shifts: tuple[float, ...] = ()

    def to_resolved_dict(self) -> dict:
        raw = asdict(self)
        return {key: list(value) if isinstance(value, tuple) else value
                for key, value in raw.items()}


def _str_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in _str_list(raw))


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in _str_list(raw))


# (section, key) -> (config field, converter)
_INI_KEYS = {
    ("experiment", "kind"): ("kind", str),
    ("experiment", "datasets"): ("datasets", _str_list),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "out_dir"): ("out_dir", str),
    ("data", "rebalance"): ("rebalance", str),
    ("data", "test_fraction"): ("test_fraction", float),
    ("data", "chunks"): ("chunks", _int_list),
    ("topology", "combiner_clients"): ("combiner_clients", _int_list),
    ("federation", "rounds"): ("rounds", int),
    ("federation", "client_fraction"): ("client_fraction", float),
    ("federation", "reducer_mode"): ("reducer_mode", str),
    ("training", "learning_rate"): ("learning_rate", float),
    ("training", "batch_size"): ("batch_size", int),
    ("training", "local_epochs"): ("local_epochs", int),
    ("synth", "samples"): ("synth_samples", int),
    ("synth", "positive_rate"): ("synth_positive_rate", float),
    ("synth", "shifts"): ("synth_shifts", _float_list),
}
_KNOWN_SECTIONS = {section for section, _ in _INI_KEYS}


def _read_ini(path: Path) -> dict:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ParseError(f"config {path}: {exc}") from exc

    values: dict = {}
    for section in parser.sections():
        if section not in _KNOWN_SECTIONS:
            raise ConfigError(f"config {path}: unknown section {section!r}")
        for key, raw in parser.items(section):
            if (section, key) not in _INI_KEYS:
                raise ConfigError(
                    f"config {path}: unknown key {key!r} in section {section!r}"
                )
            field_name, convert = _INI_KEYS[(section, key)]
            try:
                values[field_name] = convert(raw)
            except ValueError as exc:
                raise ParseError(
                    f"config {path}: bad value for {section}.{key}: {raw!r} ({exc})"
                ) from exc
    return values


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _read_resolved_json(path: Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"config {path}: top level must be an object")
    values = {}
    for key, value in raw.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"config {path}: unknown key {key!r}")
        values[key] = tuple(value) if isinstance(value, list) else value
    return values


def _resolve(values: dict, path, kind: str | None) -> ExperimentConfig:
    file_kind = values.pop("kind", None)
    if file_kind is None and kind is None:
        raise ConfigError(f"config {path}: missing mandatory key 'kind'")
    if file_kind is not None and kind is not None and file_kind != kind:
        raise ConfigError(
            f"config {path}: kind {file_kind!r} does not match requested {kind!r}"
        )
    resolved_kind = file_kind or kind

    datasets = values.pop("datasets", None)
    if not datasets:
        raise ConfigError(f"config {path}: missing mandatory key 'datasets'")
    cfg = ExperimentConfig(kind=resolved_kind, datasets=tuple(datasets), **values)
    return validate_config(cfg, path)


def validate_config(cfg: ExperimentConfig, path="<config>") -> ExperimentConfig:
    """Fill structural defaults and enforce cross-field invariants."""
    def fail(message):
        raise ConfigError(f"config {path}: {message}")

    if cfg.kind not in EXPERIMENT_KINDS:
        fail(f"kind must be one of {EXPERIMENT_KINDS}")
    if not 1 <= len(cfg.datasets) <= 3:
        fail("datasets must list between 1 and 3 entries")
    if cfg.kind == CROSS_EVAL and len(cfg.datasets) != 3:
        fail("cross_eval requires exactly 3 datasets")
    if cfg.rebalance not in REBALANCE_MODES:
        fail(f"rebalance must be one of {REBALANCE_MODES}")
    if not 0.0 < cfg.test_fraction < 1.0:
        fail("test_fraction must be in (0, 1)")
    if cfg.rounds < 1:
        fail("rounds must be >= 1")
    if not 0.0 < cfg.client_fraction <= 1.0:
        fail("client_fraction must be in (0, 1]")
    if cfg.reducer_mode not in REDUCER_MODES:
        fail(f"reducer_mode must be one of {REDUCER_MODES}")
    if cfg.learning_rate < 0:
        fail("learning_rate must be >= 0")
    if cfg.batch_size < 1:
        fail("batch_size must be >= 1")
    if cfg.local_epochs < 1:
        fail("local_epochs must be >= 1")
    if cfg.synth_samples < 10:
        fail("synth samples must be >= 10")
    if not 0.0 < cfg.synth_positive_rate < 1.0:
        fail("synth positive_rate must be in (0, 1)")

    chunks = cfg.chunks
    combiner_clients = cfg.combiner_clients
    synth_shifts = cfg.synth_shifts
    if cfg.kind == FEDERATED:
        if not chunks:
            chunks = (5, 1, 4) if len(cfg.datasets) == 3 else (1,) * len(cfg.datasets)
        if len(chunks) != len(cfg.datasets):
            fail("chunks must list one entry per dataset")
        if any(c < 1 for c in chunks):
            fail("every chunk count must be >= 1")
        n_clients = sum(chunks)
        if not combiner_clients:
            if n_clients == 1:
                combiner_clients = (1,)
            else:
                combiner_clients = (math.ceil(n_clients / 2), n_clients // 2)
        if any(c < 1 for c in combiner_clients):
            fail("every combiner must be assigned at least one client")
        if sum(combiner_clients) != n_clients:
            fail(f"combiner_clients sums to {sum(combiner_clients)} but chunks imply "
                 f"{n_clients} clients")
    if cfg.kind == SYNTH:
        if not synth_shifts:
            synth_shifts = (0.0,) * len(cfg.datasets)
        if len(synth_shifts) != len(cfg.datasets):
            fail("synth shifts must list one entry per dataset")

    return replace(cfg, chunks=tuple(chunks), combiner_clients=tuple(combiner_clients),
                   synth_shifts=tuple(synth_shifts))


def parse_config(path, kind: str | None = None) -> ExperimentConfig:
    """Parse an INI config (or an emitted config.resolved.json) and resolve it.

    `kind` is the experiment requested on the command line; a `kind` key
    inside the file is optional but must agree when present.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        values = _read_resolved_json(path)
    else:
        values = _read_ini(path)
    return _resolve(values, path, kind)
