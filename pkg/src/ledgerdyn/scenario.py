"""Scenario files: strict TOML with nested sections.

Example::

    seed = 7
    blocks = 100

    [agents]
    count = 3

    [schedule]
    type = "bitcoin"

    [[checks]]
    name = "supply-invariant"

Unknown keys anywhere are errors. ``blocks`` selects the single-ledger mode,
``rounds`` the networked mode (which also reads ``[topology]`` and ``[mining]``).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .library import CONTRACTS, VALUE_FUNCTIONS
from .rewards import (
    BITCOIN,
    ConstantSchedule,
    GeometricSchedule,
    HalvingSchedule,
    RewardSchedule,
    TabulatedSchedule,
)
from .workload import POLICIES, WorkloadPolicy


class ParseError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


class UnknownCheck(ParseError):
    pass


class BadTopology(ParseError):
    pass


@dataclass(frozen=True)
class CheckConfig:
    name: str
    label: str
    contract: str | None = None
    domain: str = "exhaustive"  # exhaustive | sampled
    accounts: int = 3
    max_balance: int = 4
    depth: int = 2
    budget: int = 100_000
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "complete"
    nodes: int = 4
    p: float = 0.2
    latency: int = 1
    finality_depth: int | None = None
    partitions: tuple = ()  # (start, end, parts)


@dataclass(frozen=True)
class MiningConfig:
    probability: float = 0.1
    work_min: float = 0.5
    work_max: float = 1.5
    until: int | None = None


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    format: str = "csv"
    report: str | None = None


@dataclass(frozen=True)
class Scenario:
    seed: int
    mode: str  # "ledger" | "network"
    horizon: int
    agents: int = 3
    policy: WorkloadPolicy = field(default_factory=WorkloadPolicy)
    schedule: RewardSchedule = BITCOIN
    topology: TopologyConfig | None = None
    mining: MiningConfig = field(default_factory=MiningConfig)
    checks: tuple[CheckConfig, ...] = ()
    output: OutputConfig = field(default_factory=OutputConfig)


# ---------------------------------------------------------------- strict readers


class _Section:
    """Typed, strict accessor over one TOML table; every key must be consumed."""

    def __init__(self, data: dict, path: str, lines: dict):
        if not isinstance(data, dict):
            raise ParseError("expected a table", path or None, lines.get(path))
        self.data = data
        self.path = path
        self.lines = lines
        self.used: set[str] = set()

    def _name(self, key):
        return f"{self.path}.{key}" if self.path else key

    def error(self, key, message, cls=ParseError):
        name = self._name(key)
        return cls(message, name, self.lines.get(name))

    def get(self, key, types, default=None, *, required=False):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise self.error(key, "missing required field")
            return default
        value = self.data[key]
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise self.error(key, f"expected {_tname(types)}, got a boolean")
        if not isinstance(value, types):
            raise self.error(key, f"expected {_tname(types)}, got {type(value).__name__}")
        return value

    def int(self, key, default=None, *, minimum=None, required=False):
        v = self.get(key, int, default, required=required)
        if v is not None and minimum is not None and v < minimum:
            raise self.error(key, f"must be >= {minimum}, got {v}")
        return v

    def num(self, key, default=None, *, lo=None, hi=None):
        v = self.get(key, (int, float), default)
        if v is not None and ((lo is not None and v < lo) or (hi is not None and v > hi)):
            raise self.error(key, f"must lie in [{lo}, {hi}], got {v}")
        return v

    def choice(self, key, options, default=None, cls=ParseError):
        v = self.get(key, str, default)
        if v is not None and v not in options:
            raise self.error(key, f"must be one of {', '.join(options)}; got {v!r}", cls)
        return v

    def sub(self, key) -> "_Section | None":
        self.used.add(key)
        if key not in self.data:
            return None
        return _Section(self.data[key], self._name(key), self.lines)

    def subs(self, key) -> list["_Section"]:
        self.used.add(key)
        items = self.data.get(key, [])
        if not isinstance(items, list):
            raise self.error(key, "expected an array of tables")
        return [_Section(item, f"{self._name(key)}[{i}]", self.lines) for i, item in enumerate(items)]

    def done(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise self.error(extra[0], "unknown key")


def _tname(types):
    types = types if isinstance(types, tuple) else (types,)
    return " or ".join(t.__name__ for t in types)


def _key_lines(text: str) -> dict[str, int]:
    """Best-effort map from dotted key path to line number, for error messages."""
    lines = {}
    table = ""
    counters: dict[str, int] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if m := re.fullmatch(r"\[\[\s*([\w.-]+)\s*\]\]", line):
            name = m.group(1)
            idx = counters.get(name, 0)
            counters[name] = idx + 1
            table = f"{name}[{idx}]"
            lines[table] = no
        elif m := re.fullmatch(r"\[\s*([\w.-]+)\s*\]", line):
            table = m.group(1)
            lines[table] = no
        elif m := re.match(r"([\w-]+)\s*=", line):
            lines[f"{table}.{m.group(1)}" if table else m.group(1)] = no
    return lines


# ---------------------------------------------------------------- sections


def _schedule(sec: _Section | None) -> RewardSchedule:
    if sec is None:
        return BITCOIN
    kind = sec.choice("type", ("bitcoin", "halving", "constant", "geometric", "table"), "bitcoin")
    try:
        if kind == "bitcoin":
            schedule = BITCOIN
        elif kind == "halving":
            schedule = HalvingSchedule(
                sec.int("initial_reward", BITCOIN.initial_reward, minimum=0),
                sec.int("interval", BITCOIN.interval_length, minimum=1),
                sec.int("halvings", BITCOIN.halvings, minimum=0),
            )
        elif kind == "constant":
            schedule = ConstantSchedule(sec.int("reward", required=True, minimum=0),
                                        sec.int("stop_after", None, minimum=0))
        elif kind == "geometric":
            ratio = sec.get("ratio", (str, int, float), "1/2")
            try:
                ratio = Fraction(ratio)
            except (ValueError, ZeroDivisionError):
                raise sec.error("ratio", f"not a rational number: {ratio!r}") from None
            schedule = GeometricSchedule(sec.int("initial_reward", required=True, minimum=0), ratio,
                                         sec.int("interval", 1, minimum=1))
        else:
            values = sec.get("values", list, required=True)
            if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in values):
                raise sec.error("values", "must be a list of non-negative integers")
            schedule = TabulatedSchedule(tuple(values))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise sec.error("type", str(exc)) from None
    sec.done()
    return schedule


def _agents(sec: _Section | None) -> tuple[int, WorkloadPolicy]:
    if sec is None:
        return 3, WorkloadPolicy()
    count = sec.int("count", 3, minimum=1)
    policy = WorkloadPolicy(
        kind=sec.choice("policy", POLICIES, "uniform"),
        sends_per_block=sec.int("sends_per_block", 5, minimum=0),
        new_account_rate=sec.num("new_account_rate", 0.0, lo=0, hi=1),
        dormant_fraction=sec.num("dormant_fraction", 0.0, lo=0, hi=1),
        hub=sec.int("hub", 0, minimum=0),
    )
    sec.done()
    return count, policy


def _topology(sec: _Section | None) -> TopologyConfig:
    if sec is None:
        return TopologyConfig()
    kind = sec.choice("kind", ("complete", "ring", "random"), "complete", cls=BadTopology)
    nodes = sec.int("nodes", 4, minimum=1)
    p = sec.num("p", 0.2, lo=0, hi=1)
    if kind == "random" and p == 0 and nodes > 1:
        raise sec.error("p", "a random topology with p = 0 is never connected", BadTopology)
    latency = sec.int("latency", 1)
    if latency < 1:
        raise sec.error("latency", "latency must be >= 1 round", BadTopology)
    finality = sec.int("finality_depth", None, minimum=1)
    parts = []
    for psec in sec.subs("partitions"):
        start = psec.int("start", 0, minimum=0)
        end = psec.int("end", required=True, minimum=0)
        n_parts = psec.int("parts", 2, minimum=2)
        if end < start:
            raise psec.error("end", "must be >= start")
        if n_parts > nodes:
            raise psec.error("parts", "more parts than nodes", BadTopology)
        psec.done()
        parts.append((start, end, n_parts))
    sec.done()
    return TopologyConfig(kind, nodes, float(p), latency, finality, tuple(parts))


def _mining(sec: _Section | None) -> MiningConfig:
    if sec is None:
        return MiningConfig()
    cfg = MiningConfig(
        probability=float(sec.num("probability", 0.1, lo=0, hi=1)),
        work_min=float(sec.num("work_min", 0.5, lo=0)),
        work_max=float(sec.num("work_max", 1.5, lo=0)),
        until=sec.int("until", None, minimum=0),
    )
    if cfg.work_max < cfg.work_min:
        raise sec.error("work_max", "must be >= work_min")
    sec.done()
    return cfg


_CHECK_PARAMS = ("gamma", "epsilon", "target", "neighborhood")


def check_from_name(name: str, label: str | None = None, **kw) -> CheckConfig:
    if name not in VALUE_FUNCTIONS:
        raise UnknownCheck(f"unknown check {name!r}; known: {', '.join(VALUE_FUNCTIONS)}", "checks")
    return CheckConfig(name=name, label=label or name, **kw)


def _checks(secs: list[_Section]) -> tuple[CheckConfig, ...]:
    out = []
    labels: set[str] = set()
    for sec in secs:
        name = sec.get("name", str, required=True)
        if name not in VALUE_FUNCTIONS:
            raise sec.error("name", f"unknown check {name!r}; known: {', '.join(VALUE_FUNCTIONS)}", UnknownCheck)
        contract = sec.get("contract", str, None)
        if contract is not None and contract not in CONTRACTS:
            raise sec.error("contract", f"unknown contract {contract!r}; known: {', '.join(CONTRACTS)}", UnknownCheck)
        if name == "deviation" and contract is None:
            raise sec.error("contract", "the deviation check needs a contract (deviation-halving or deviation-sabotaged)")
        label = sec.get("label", str, None) or name
        if label in labels:
            i = 2
            while f"{label}#{i}" in labels:
                i += 1
            label = f"{label}#{i}"
        labels.add(label)
        params = {}
        for key in _CHECK_PARAMS:
            v = sec.num(key, None)
            if v is not None:
                params[key] = float(v)
        if "gamma" in params and not 0 <= params["gamma"] < 1:
            raise sec.error("gamma", "must lie in [0, 1)")
        kind = sec.choice("kind", ("invariant", "monotone"), None)
        if kind is not None:
            params["kind"] = kind
        out.append(CheckConfig(
            name=name,
            label=label,
            contract=contract,
            domain=sec.choice("domain", ("exhaustive", "sampled"), "exhaustive"),
            accounts=sec.int("accounts", 3, minimum=1),
            max_balance=sec.int("max_balance", 4, minimum=0),
            depth=sec.int("depth", 2, minimum=1),
            budget=sec.int("budget", 100_000, minimum=1),
            params=params,
        ))
        sec.done()
    return tuple(out)


def _output(sec: _Section | None) -> OutputConfig:
    if sec is None:
        return OutputConfig()
    cfg = OutputConfig(sec.get("path", str, None), sec.choice("format", ("csv", "jsonl"), "csv"),
                       sec.get("report", str, None))
    sec.done()
    return cfg


def parse_scenario_text(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), line=getattr(exc, "lineno", None)) from None
    lines = _key_lines(text)
    top = _Section(data, "", lines)
    seed = top.int("seed", required=True)
    blocks = top.int("blocks", None)
    rounds = top.int("rounds", None)
    if (blocks is None) == (rounds is None):
        raise ParseError("exactly one of 'blocks' or 'rounds' sets the horizon", "blocks", lines.get("blocks"))
    horizon_key = "blocks" if blocks is not None else "rounds"
    horizon = blocks if blocks is not None else rounds
    if horizon < 1:
        raise top.error(horizon_key, f"horizon must be >= 1, got {horizon}")
    mode = "ledger" if blocks is not None else "network"
    agents, policy = _agents(top.sub("agents"))
    schedule = _schedule(top.sub("schedule"))
    topology = _topology(top.sub("topology"))
    mining = _mining(top.sub("mining"))
    checks = _checks(top.subs("checks"))
    output = _output(top.sub("output"))
    top.done()
    if mode == "ledger" and "topology" in data:
        raise ParseError("[topology] only applies to networked runs ('rounds')", "topology", lines.get("topology"))
    return Scenario(seed, mode, horizon, agents, policy, schedule,
                    topology if mode == "network" else None, mining, checks, output)


def parse_scenario(path: str | Path) -> Scenario:
    """Read and fully validate a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario_text(text)


def with_overrides(scenario: Scenario, *, seed: int | None = None, extra_checks=(), out=None, fmt=None) -> Scenario:
    from dataclasses import replace

    checks = list(scenario.checks)
    labels = {c.label for c in checks}
    for name in extra_checks:
        cfg = check_from_name(name)
        if cfg.label not in labels:
            checks.append(cfg)
            labels.add(cfg.label)
    output = replace(scenario.output,
                     path=out if out is not None else scenario.output.path,
                     format=fmt if fmt is not None else scenario.output.format)
    return replace(scenario, seed=scenario.seed if seed is None else seed, checks=tuple(checks), output=output)
