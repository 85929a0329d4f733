"""Run configuration: a line-oriented ``key = value`` file plus overrides.

Precedence is command line, then file, then the defaults in :data:`KEYS`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .analysis.cost import CostModel
from .host.report import CoreConfig
from .ir.types import LOCAL, Space, remote

MODES = ("baseline", "offload", "adaptive")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    default: object
    doc: str
    kind: type


def _k(default, doc: str, kind: type | None = None) -> Key:
    return Key(default, doc, kind or type(default))


KEYS: dict[str, Key] = {
    # workload
    "workload": _k("PointerChase", "generator kind: PointerChase, Strided, HashProbe or IndirectGather"),
    "n": _k(1024, "element count"),
    "stride": _k(64, "bytes between Strided elements (multiple of 8)"),
    "work_per_element": _k(4, "independent adds per loop iteration"),
    "space": _k("remote 2", "where generated data lives: 'local' or 'remote <endpoint>'"),
    "capacity": _k(0, "bytes per generated region, 0 sizes regions to fit"),
    "program": _k("", "IR text file to run instead of a generated workload"),
    "memory": _k("", "memory image text file for 'program' (default all zero)"),
    "trace": _k("", "address trace file to replay instead of a generated workload"),
    "seed": _k(1, "workload seed, also recorded in the report"),
    # topology
    "topology": _k("line", "builtin topology (line, dual, direct) or a topology file"),
    "bandwidth": _k(8, "link bandwidth in bytes per cycle for builtin topologies"),
    # cost model; hop_latency also sets builtin link latency
    "submit_overhead": _k(20.0, "cycles to issue a slice submission"),
    "hop_latency": _k(150.0, "cycles per fabric hop"),
    "line_transfer": _k(8.0, "cycles to return one 64-byte result line"),
    "near_cpi": _k(2.0, "cycles per instruction on a near core"),
    "host_cpi": _k(1.0, "cycles per arithmetic instruction on the host"),
    "l1_hit": _k(4.0, "host L1 hit latency"),
    "local_mem": _k(80.0, "host local memory latency"),
    "near_mem": _k(40.0, "near core latency to memory it owns"),
    # core
    "rob": _k(64, "reorder buffer entries"),
    "mshr": _k(8, "miss status holding registers"),
    "l1_size": _k(32768, "L1 data cache bytes"),
    "assoc": _k(8, "L1 associativity"),
    "issue_width": _k(1, "instructions issued and committed per cycle"),
    "mailbox_depth": _k(8, "slice completions the mailbox can hold"),
    # analysis and adaptation
    "mode": _k("offload", "baseline, offload or adaptive"),
    "rounds": _k(4, "adaptive rounds"),
    "alpha": _k(0.5, "profile smoothing factor"),
    "batching": _k(True, "merge independent chains into one slice"),
    "max_slice_len": _k(64, "maximum static slice length"),
    "check_oracle": _k(True, "compare every run against the interpreter"),
    "output": _k("out", "output directory"),
}

COST_KEYS = tuple(CostModel().as_dict())
CORE_KEYS = ("rob", "mshr", "l1_size", "assoc", "issue_width", "mailbox_depth")
NUMERIC = tuple(k for k, v in KEYS.items() if v.kind in (int, float))


def _convert(key: str, text: str):
    kind = KEYS[key].kind
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text, 0)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_space(text: str) -> Space:
    toks = text.split()
    if toks == ["local"]:
        return LOCAL
    if len(toks) == 2 and toks[0] == "remote" and toks[1].isdigit():
        return remote(int(toks[1]))
    raise ConfigError(f"config key space: expected 'local' or 'remote <endpoint>', got {text!r}")


@dataclass
class RunConfig:
    values: dict[str, object] = field(default_factory=lambda: {k: v.default for k, v in KEYS.items()})
    explicit: set[str] = field(default_factory=set)

    def __getattr__(self, key: str):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def set(self, key: str, value) -> None:
        if key not in KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(value, str):
            value = _convert(key, value)
        elif KEYS[key].kind is float:
            value = float(value)
        self.values[key] = value
        self.explicit.add(key)

    def with_value(self, key: str, value) -> RunConfig:
        out = RunConfig(dict(self.values), set(self.explicit))
        out.set(key, value)
        return out

    def cost_model(self) -> CostModel:
        try:
            return CostModel(**{k: self.values[k] for k in COST_KEYS})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def core_config(self) -> CoreConfig:
        try:
            return CoreConfig(**{k: self.values[k] for k in CORE_KEYS})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"config key mode: expected one of {MODES}, got {self.mode!r}")
        if self.rounds < 1:
            raise ConfigError("config key rounds must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ConfigError("config key alpha must be in (0, 1]")
        parse_space(self.space)
        self.cost_model()
        self.core_config()

    def to_text(self, docs: bool = False) -> str:
        rows = []
        for key, spec in KEYS.items():
            value = self.values[key]
            if isinstance(value, bool):
                value = str(value).lower()
            row = f"{key} = {value}"
            rows.append(f"{row:<32} # {spec.doc}" if docs else row)
        return "\n".join(rows) + "\n"


def parse_config_text(text: str, cfg: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        row = raw.split("#", 1)[0].strip()
        if not row:
            continue
        key, eq, value = row.partition("=")
        if not eq:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        try:
            cfg.set(key.strip(), value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def load_config(path: str | Path | None = None, overrides: list[str] = ()) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        parse_config_text(text, cfg, str(path))
    for item in overrides:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg.set(key.strip(), value)
    cfg.validate()
    return cfg
