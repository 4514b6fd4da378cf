"""File formats: class-count files, run configurations and CSV results.

Counts and configs are TOML. A counts file looks like::

    # mdiqkd counts v1
    n_pairs = 30000000000000

    [ss]
    total = 67610084
    errors = 1851744

with one table per pair class in the order ss, mumu, nunu, mu0, nu0, 00.
``errors`` may be omitted for classes whose error gain was not recorded.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .core import ProtocolParams, SystemParams
from .decoy import CLASS_LABELS, ClassCounts, FluctuationConfig, FluctuationModel, ObservedStatistics
from .system import ChannelPair

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COUNTS_HEADER = "# mdiqkd counts v1"


class FormatError(ValueError):
    """A counts file does not follow the documented layout."""


class ConfigError(ValueError):
    """A run configuration failed schema validation."""


def fmt_float(x: float) -> str:
    """Shortest representation that round-trips to the same double."""
    return repr(float(x))


def _load_toml(text: str, source: str, error: type) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise error(f"{source}: {exc}") from None


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- counts files


def _count(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"{where}: expected a non-negative integer, got {value!r}")
    if value < 0:
        raise FormatError(f"{where}: expected a non-negative integer, got {value}")
    return value


def parse_counts_text(text: str, source: str = "<counts>") -> ObservedStatistics:
    doc = _load_toml(text, source, FormatError)
    unknown = set(doc) - {"n_pairs", *CLASS_LABELS}
    if unknown:
        raise FormatError(f"{source}: unknown keys {sorted(unknown)}")
    if "n_pairs" not in doc:
        raise FormatError(f"{source}: missing n_pairs")
    n_pairs = _count(doc["n_pairs"], f"{source}: n_pairs")
    if n_pairs == 0:
        raise FormatError(f"{source}: n_pairs must be positive")
    classes = {}
    for label in CLASS_LABELS:
        row = doc.get(label)
        if not isinstance(row, dict):
            raise FormatError(f"{source}: missing class table [{label}]")
        extra = set(row) - {"total", "errors"}
        if extra:
            raise FormatError(f"{source}: [{label}] unknown keys {sorted(extra)}")
        if "total" not in row:
            raise FormatError(f"{source}: [{label}] missing total")
        total = _count(row["total"], f"{source}: [{label}] total")
        errors = row.get("errors")
        if errors is not None:
            errors = _count(errors, f"{source}: [{label}] errors")
            if errors > total:
                raise FormatError(f"{source}: class {label}: errors {errors} exceed total {total}")
        if total > n_pairs:
            raise FormatError(f"{source}: class {label}: total {total} exceeds n_pairs")
        classes[label] = ClassCounts(total, errors)
    return ObservedStatistics(n_pairs, classes)


def parse_counts(path) -> ObservedStatistics:
    return parse_counts_text(_read(path), str(path))


def emit_counts(obs: ObservedStatistics) -> str:
    """Canonical text of integer counts; inverse of :func:`parse_counts_text`."""
    def as_int(x, what):
        if isinstance(x, float):
            if not x.is_integer():
                raise ValueError(f"{what} = {x} is not an integer count")
            x = int(x)
        return x

    lines = [COUNTS_HEADER, f"n_pairs = {as_int(obs.n_pairs, 'n_pairs')}"]
    for label in CLASS_LABELS:
        c = obs.classes[label]
        lines += ["", f"[{label}]", f"total = {as_int(c.total, label + ' total')}"]
        if c.errors is not None:
            lines.append(f"errors = {as_int(c.errors, label + ' errors')}")
    return "\n".join(lines) + "\n"


def write_counts(obs: ObservedStatistics, path) -> None:
    Path(path).write_text(emit_counts(obs), encoding="utf-8")


def bundled(name: str) -> Path:
    """Path of a fixture shipped in ``mdiqkd/data``."""
    path = resources.files("mdiqkd") / "data" / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled file named {name}")
    return Path(str(path))


# ------------------------------------------------------------- run configs

_SYSTEM_KEYS = {f.name for f in fields(SystemParams)}
_PROTOCOL_KEYS = {"s", "mu", "nu", "p_s", "p_mu", "p_nu"}
_SCHEMA = {
    "system": _SYSTEM_KEYS,
    "protocol": _PROTOCOL_KEYS | {"optimize"},
    "fluctuation": {"epsilon", "model"},
    "channel": {"loss_db", "loss_alice_db", "loss_bob_db", "distance_km"},
    "run": {"n_pairs", "seed", "output", "loss_grid", "workers", "n_restarts"},
    "align": {"target_qber", "max_iter", "drift", "misalignment", "drift_iterations"},
}


@dataclass(frozen=True)
class AlignConfig:
    target_qber: float = 0.01
    max_iter: int = 5000
    drift: float = 0.0
    misalignment: float = 0.0
    drift_iterations: int = 0


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    protocol: ProtocolParams | None = None
    fluctuation: FluctuationConfig = field(default_factory=FluctuationConfig)
    channel: ChannelPair | None = None
    n_pairs: float | None = None
    seed: int = 0
    output: Path | None = None
    loss_grid: tuple[float, ...] = ()
    workers: int = 1
    n_restarts: int = 8
    align: AlignConfig = field(default_factory=AlignConfig)


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number")
    return float(value)


def _integer(value, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _build(kind: type, kwargs: dict, where: str):
    try:
        return kind(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _channel(sec: dict, system: SystemParams) -> ChannelPair:
    given = [k for k in ("loss_db", "distance_km") if k in sec]
    split = "loss_alice_db" in sec or "loss_bob_db" in sec
    if len(given) + split != 1:
        raise ConfigError("[channel]: give exactly one of loss_db, distance_km "
                          "or loss_alice_db + loss_bob_db")
    if "loss_db" in sec:
        return _build(ChannelPair.symmetric, {"total_loss_db": _number(sec["loss_db"], "channel.loss_db")},
                      "[channel]")
    if split:
        if not ("loss_alice_db" in sec and "loss_bob_db" in sec):
            raise ConfigError("[channel]: loss_alice_db and loss_bob_db go together")
        return _build(ChannelPair, {"loss_alice_db": _number(sec["loss_alice_db"], "channel.loss_alice_db"),
                                    "loss_bob_db": _number(sec["loss_bob_db"], "channel.loss_bob_db")},
                      "[channel]")
    dist = sec["distance_km"]
    if isinstance(dist, list):
        if len(dist) != 2:
            raise ConfigError("channel.distance_km: expected a total or [alice, bob]")
        da, db = (_number(d, "channel.distance_km") for d in dist)
    else:
        da = db = _number(dist, "channel.distance_km") / 2
    return _build(ChannelPair.from_km, {"distance_alice": da, "distance_bob": db,
                                        "coeff": system.fiber_loss_coeff}, "[channel]")


def config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a parsed config; every unknown section or key is an error."""
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    for name, sec in doc.items():
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        extra = set(sec) - _SCHEMA[name]
        if extra:
            raise ConfigError(f"[{name}] unknown keys {sorted(extra)}")

    sys_sec = doc.get("system", {})
    system = _build(SystemParams, {k: _number(v, f"system.{k}") for k, v in sys_sec.items()}, "[system]")

    protocol = None
    proto = doc.get("protocol", {})
    if proto.get("optimize", False) is not True:
        if "optimize" in proto and proto["optimize"] is not False:
            raise ConfigError("protocol.optimize must be true or false")
        present = _PROTOCOL_KEYS & set(proto)
        if present and present != _PROTOCOL_KEYS:
            raise ConfigError(f"[protocol] missing {sorted(_PROTOCOL_KEYS - present)}")
        if present:
            protocol = _build(ProtocolParams.symmetric_from,
                              {k: _number(proto[k], f"protocol.{k}") for k in _PROTOCOL_KEYS},
                              "[protocol]")
    elif _PROTOCOL_KEYS & set(proto):
        raise ConfigError("[protocol] optimize = true excludes explicit parameters")

    fl = doc.get("fluctuation", {})
    model_name = fl.get("model", FluctuationModel.GAUSSIAN_JOINT.value)
    try:
        model = FluctuationModel(model_name)
    except ValueError:
        choices = [m.value for m in FluctuationModel]
        raise ConfigError(f"fluctuation.model: {model_name!r} not in {choices}") from None
    epsilon = _number(fl.get("epsilon", 1e-10), "fluctuation.epsilon")
    fluctuation = _build(FluctuationConfig, {"epsilon": epsilon, "model": model}, "[fluctuation]")

    channel = _channel(doc["channel"], system) if "channel" in doc else None

    run = doc.get("run", {})
    n_pairs = None
    if "n_pairs" in run:
        n_pairs = _number(run["n_pairs"], "run.n_pairs")
        if n_pairs < 1:
            raise ConfigError("run.n_pairs must be >= 1")
    output = None
    if "output" in run:
        if not isinstance(run["output"], str) or not run["output"]:
            raise ConfigError("run.output must be a non-empty path")
        output = Path(run["output"])
        if base_dir is not None and not output.is_absolute():
            output = base_dir / output
    grid = run.get("loss_grid", [])
    if not isinstance(grid, list):
        raise ConfigError("run.loss_grid must be a list of dB values")
    loss_grid = tuple(_number(x, "run.loss_grid") for x in grid)

    al = doc.get("align", {})
    align = AlignConfig(
        target_qber=_number(al.get("target_qber", 0.01), "align.target_qber"),
        max_iter=_integer(al.get("max_iter", 5000), "align.max_iter", 1),
        drift=_number(al.get("drift", 0.0), "align.drift"),
        misalignment=_number(al.get("misalignment", 0.0), "align.misalignment"),
        drift_iterations=_integer(al.get("drift_iterations", 0), "align.drift_iterations"),
    )
    if not 0.0 < align.target_qber < 0.1:
        raise ConfigError("align.target_qber must lie in (0, 0.1)")
    if align.drift < 0:
        raise ConfigError("align.drift must be >= 0")

    return RunConfig(system, protocol, fluctuation, channel, n_pairs,
                     _integer(run.get("seed", 0), "run.seed"), output, loss_grid,
                     _integer(run.get("workers", 1), "run.workers", 1),
                     _integer(run.get("n_restarts", 8), "run.n_restarts", 1), align)


def load_config(path) -> RunConfig:
    """Parse a TOML run config; relative output paths resolve next to it."""
    doc = _load_toml(_read(path), str(path), ConfigError)
    return config_from_dict(doc, Path(path).resolve().parent)


# ------------------------------------------------------------------- CSV


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """CSV with a header row; floats in shortest round-trip form."""
    def cell(v):
        if isinstance(v, float):
            return fmt_float(v)
        if isinstance(v, bool):
            return "true" if v else "false"
        return "" if v is None else str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(v) for v in row])


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Rows of a CSV written by :func:`write_csv`; numeric cells become floats."""
    def value(text):
        if text == "":
            return None
        try:
            return float(text)
        except ValueError:
            return text

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [dict(zip(header, map(value, row))) for row in reader]
