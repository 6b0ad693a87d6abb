"""Scenario files.

A scenario is a TOML document::

    schema = 1
    duration_s = 2.0
    seed = 7

    [tdma]
    solution = 3            # or: config = "path/to/config.txt", or inline TdmaConfig keys

    [channel]               # optional; any ChannelParams field, ber_table is a CSV path
    bandwidth_mhz = 10

    [nodes.A]
    x = 0.0
    y = 0.0
    mgmt_slot = 0           # optional, defaults to the node's position in the file
    address = "02:00:00:00:00:01"   # optional
    sleep = [[100, 200]]    # optional sleep windows in ms

    [ptt]
    actions = [{ node = "A", press_ms = 0, talk_ms = 2000, destination = "broadcast" }]
    synthetic = { nodes = ["A"], mean_on_ms = 3000, mean_off_ms = 10000 }   # optional
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .codec import BROADCAST, parse_address
from .phy import ChannelParams, PhyError, load_ber_table
from .planner import SlotKind, TdmaConfig, load_config, table1_solution, validate_config
from .ptt import TalkAction

SCHEMA_VERSION = 1
ADDRESS_BASE = 0x02_00_00_00_00_00


class ScenarioInvalid(ValueError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{f}: {m}" for f, m in problems))


@dataclass(frozen=True)
class NodeSpec:
    name: str
    x: float
    y: float
    mgmt_slot: int
    address: int
    sleep_us: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class ScriptedAction:
    node: str
    action: TalkAction


@dataclass(frozen=True)
class SyntheticTalk:
    nodes: tuple[str, ...]
    mean_on_ms: float
    mean_off_ms: float
    destination: int = BROADCAST


@dataclass(frozen=True)
class Scenario:
    tdma: TdmaConfig
    nodes: tuple[NodeSpec, ...]
    duration_us: int
    seed: int
    channel: ChannelParams = field(default_factory=ChannelParams)
    actions: tuple[ScriptedAction, ...] = ()
    synthetic: SyntheticTalk | None = None
    name: str = "scenario"

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


def _num(problems, where, value, *, integer=False, positive=False, nonneg=False):
    ok_types = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, ok_types):
        problems.append((where, f"expected {'an integer' if integer else 'a number'}, got {value!r}"))
        return None
    if not math.isfinite(value):
        problems.append((where, "must be finite"))
        return None
    if positive and value <= 0:
        problems.append((where, "must be > 0"))
        return None
    if nonneg and value < 0:
        problems.append((where, "must be >= 0"))
        return None
    return value


def _tdma(problems, raw, base: Path) -> TdmaConfig | None:
    if not isinstance(raw, dict):
        problems.append(("tdma", "missing [tdma] section"))
        return None
    try:
        if "solution" in raw:
            cfg = table1_solution(raw["solution"])
        elif "config" in raw:
            cfg = load_config((base / raw["config"]).read_text())
        else:
            names = {f.name for f in fields(TdmaConfig)}
            unknown = set(raw) - names
            if unknown:
                problems.append(("tdma", f"unknown keys {sorted(unknown)}"))
                return None
            cfg = TdmaConfig(**raw)
    except (KeyError, TypeError, ValueError, OSError) as exc:
        problems.append(("tdma", str(exc)))
        return None
    report = validate_config(cfg)
    if not report.ok:
        problems.append(("tdma", "config fails validation: " + ", ".join(c.name for c in report.failed())))
        return None
    return cfg


def _channel(problems, raw, base: Path) -> ChannelParams | None:
    raw = dict(raw or {})
    kwargs = {}
    if "ber_table" in raw:
        try:
            kwargs["ber_table"] = load_ber_table(base / raw.pop("ber_table"))
        except (OSError, PhyError) as exc:
            problems.append(("channel.ber_table", str(exc)))
            return None
    names = {f.name for f in fields(ChannelParams)} - {"ber_table"}
    for key, value in raw.items():
        if key not in names:
            problems.append((f"channel.{key}", "unknown key"))
            continue
        v = _num(problems, f"channel.{key}", value)
        if v is not None:
            kwargs[key] = float(v)
    try:
        return ChannelParams(**kwargs)
    except PhyError as exc:
        problems.append(("channel", str(exc)))
        return None


def _nodes(problems, raw, cfg: TdmaConfig | None) -> list[NodeSpec]:
    if not isinstance(raw, dict) or not raw:
        problems.append(("nodes", "at least one [nodes.NAME] table is required"))
        return []
    capacity = cfg.slots_per_cycle(SlotKind.MGMT) if cfg else None
    out = []
    for i, (name, spec) in enumerate(raw.items()):
        where = f"nodes.{name}"
        if not isinstance(spec, dict):
            problems.append((where, "must be a table"))
            continue
        x = _num(problems, f"{where}.x", spec.get("x"))
        y = _num(problems, f"{where}.y", spec.get("y"))
        slot = _num(problems, f"{where}.mgmt_slot", spec.get("mgmt_slot", i), integer=True, nonneg=True)
        if slot is not None and capacity is not None and slot >= capacity:
            problems.append((f"{where}.mgmt_slot", f"{slot} outside the {capacity} MGMT slots"))
        try:
            addr = parse_address(spec["address"]) if "address" in spec else ADDRESS_BASE + i + 1
            if addr == BROADCAST:
                raise ValueError("broadcast address cannot name a node")
        except (TypeError, ValueError) as exc:
            problems.append((f"{where}.address", str(exc)))
            addr = None
        windows = []
        for k, win in enumerate(spec.get("sleep", [])):
            if not (isinstance(win, list) and len(win) == 2):
                problems.append((f"{where}.sleep[{k}]", "expected [start_ms, end_ms]"))
                continue
            a = _num(problems, f"{where}.sleep[{k}]", win[0], nonneg=True)
            b = _num(problems, f"{where}.sleep[{k}]", win[1], nonneg=True)
            if a is not None and b is not None:
                if b <= a:
                    problems.append((f"{where}.sleep[{k}]", "end must follow start"))
                windows.append((round(a * 1000), round(b * 1000)))
        if None not in (x, y, slot, addr):
            out.append(NodeSpec(name, float(x), float(y), slot, addr, tuple(windows)))
    if capacity is not None and len(raw) > capacity:
        problems.append(("nodes", f"{len(raw)} nodes exceed the {capacity} MGMT slots"))
    for attr in ("mgmt_slot", "address"):
        seen = {}
        for n in out:
            v = getattr(n, attr)
            if v in seen:
                problems.append((f"nodes.{n.name}.{attr}", f"duplicates nodes.{seen[v]}"))
            seen.setdefault(v, n.name)
    return out


def _destination(problems, where, value, names) -> int | None:
    if value in (None, "broadcast"):
        return BROADCAST
    if value in names:
        return names[value]
    problems.append((where, f"unknown destination {value!r}"))
    return None


def _ptt(problems, raw, nodes: list[NodeSpec]):
    raw = raw or {}
    names = {n.name: n.address for n in nodes}
    actions = []
    for k, a in enumerate(raw.get("actions", [])):
        where = f"ptt.actions[{k}]"
        if not isinstance(a, dict):
            problems.append((where, "must be a table"))
            continue
        if a.get("node") not in names:
            problems.append((f"{where}.node", f"unknown node {a.get('node')!r}"))
            continue
        press = _num(problems, f"{where}.press_ms", a.get("press_ms"), nonneg=True)
        talk = _num(problems, f"{where}.talk_ms", a.get("talk_ms"), nonneg=True)
        dest = _destination(problems, f"{where}.destination", a.get("destination"), names)
        if dest == names[a["node"]]:
            problems.append((f"{where}.destination", "a node cannot call itself"))
            continue
        if None not in (press, talk, dest):
            actions.append(ScriptedAction(a["node"], TalkAction(round(press * 1000), round(talk * 1000), dest)))
    synthetic = None
    if "synthetic" in raw:
        s = raw["synthetic"]
        sel = s.get("nodes", "all")
        sel = tuple(names) if sel == "all" else tuple(sel)
        bad = [n for n in sel if n not in names]
        if bad:
            problems.append(("ptt.synthetic.nodes", f"unknown nodes {bad}"))
        on = _num(problems, "ptt.synthetic.mean_on_ms", s.get("mean_on_ms"), positive=True)
        off = _num(problems, "ptt.synthetic.mean_off_ms", s.get("mean_off_ms"), positive=True)
        dest = _destination(problems, "ptt.synthetic.destination", s.get("destination"), names)
        if not bad and None not in (on, off, dest):
            synthetic = SyntheticTalk(sel, float(on), float(off), dest)
    return actions, synthetic


def parse_scenario(doc: dict, base: Path | str = ".", name: str = "scenario") -> Scenario:
    base = Path(base)
    problems: list[tuple[str, str]] = []
    if doc.get("schema") != SCHEMA_VERSION:
        problems.append(("schema", f"expected schema = {SCHEMA_VERSION}, got {doc.get('schema')!r}"))
    known = {"schema", "duration_s", "seed", "tdma", "channel", "nodes", "ptt", "name"}
    for key in sorted(set(doc) - known):
        problems.append((key, "unknown top-level key"))
    duration = _num(problems, "duration_s", doc.get("duration_s"), positive=True)
    seed = _num(problems, "seed", doc.get("seed", 0), integer=True, nonneg=True)
    if seed is not None and seed >= 2**64:
        problems.append(("seed", "must fit in 64 bits"))
    cfg = _tdma(problems, doc.get("tdma"), base)
    channel = _channel(problems, doc.get("channel"), base)
    nodes = _nodes(problems, doc.get("nodes"), cfg)
    actions, synthetic = _ptt(problems, doc.get("ptt"), nodes)
    if problems:
        raise ScenarioInvalid(problems)
    return Scenario(
        tdma=cfg,
        nodes=tuple(nodes),
        duration_us=round(duration * 1e6),
        seed=seed,
        channel=channel,
        actions=tuple(actions),
        synthetic=synthetic,
        name=str(doc.get("name", name)),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ScenarioInvalid([("file", str(exc))]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioInvalid([("file", f"not valid TOML: {exc}")]) from None
    return parse_scenario(doc, path.parent, path.stem)
