"""Scenario files: a sectioned, line-oriented description of one simulation run.

Sections::

    [run]          length, split (monolithic | loopback:PORT)
    [enb]          config (path relative to the scenario), earfcn_mapping,
                   scrambling, MAC knobs (dci_data_gap, harq_max_retx, ...)
    [phy]          seed, loss_prob, required_reps, crc_bug, crc_recovery,
                   preamble_script
    [core]         identity_request, mme_responsive
    [subscribers]  one "IMSI K-hex CE" triple per line
    [ue N]         imsi, optional k (SIM key, defaults to the subscriber's),
                   optional ce_level; lines starting with "AT" or "@T AT"
                   form the AT script
    [assert]       "name: kind arguments" per line

``#`` starts a comment anywhere except inside an ``[ue]`` script line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError

SECTIONS = ("run", "enb", "phy", "core", "subscribers", "ue", "assert")
ASSERTION_KINDS = ("s1ap_sequence", "sink_count", "sink_record", "trace_count", "at_response", "ue_phase")
MAC_KNOBS = ("dci_data_gap", "harq_max_retx", "harq_ack_delay", "msg3_delay", "ul_grant_delay", "horizon",
             "ul_poll_interval", "dl_reps", "ul_reps")


class ScenarioError(ConfigError):
    pass


@dataclass(frozen=True)
class Subscriber:
    imsi: str
    k: bytes
    ce_level: int = 0


@dataclass
class UeSpec:
    ue_id: int
    imsi: str
    k: bytes | None = None
    ce_level: int | None = None
    script: list[tuple[int | None, str]] = field(default_factory=list)


@dataclass(frozen=True)
class PhySpec:
    seed: int = 0
    loss_prob: tuple = (0.0, 0.0, 0.0)
    required_reps: tuple = (1, 2, 4)
    crc_bug: bool = False
    crc_recovery: bool = False
    preamble_script: tuple = ()


@dataclass(frozen=True)
class AssertionSpec:
    name: str
    kind: str
    args: str


@dataclass
class Scenario:
    path: Path | None
    enb_config_path: Path
    run_length: int = 4000
    split: str = "monolithic"
    split_port: int | None = None
    earfcn_mapping: str = "compat"
    enb_scrambling: bool = False
    mac: dict = field(default_factory=dict)
    phy: PhySpec = field(default_factory=PhySpec)
    identity_request: bool = True
    mme_responsive: bool = True
    subscribers: dict[str, Subscriber] = field(default_factory=dict)
    ues: list[UeSpec] = field(default_factory=list)
    assertions: list[AssertionSpec] = field(default_factory=list)

    def sim_key(self, ue: UeSpec) -> bytes:
        return ue.k if ue.k is not None else self.subscribers[ue.imsi].k

    def ce_level(self, ue: UeSpec) -> int:
        return ue.ce_level if ue.ce_level is not None else self.subscribers[ue.imsi].ce_level


def _bool(text: str, where: str) -> bool:
    v = text.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ScenarioError(f"{where}: expected a boolean, got {text!r}")


def _int(text: str, where: str, lo: int | None = None) -> int:
    try:
        v = int(text.strip(), 0)
    except ValueError:
        raise ScenarioError(f"{where}: expected an integer, got {text!r}") from None
    if lo is not None and v < lo:
        raise ScenarioError(f"{where}: must be >= {lo}")
    return v


def _key(text: str, where: str) -> bytes:
    try:
        k = bytes.fromhex(text.strip())
    except ValueError:
        raise ScenarioError(f"{where}: K must be hex") from None
    if len(k) != 16:
        raise ScenarioError(f"{where}: K must be 16 bytes")
    return k


def _triple(text: str, where: str, conv) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise ScenarioError(f"{where}: need one value or three comma-separated values")
    try:
        return tuple(conv(p) for p in parts)
    except ValueError:
        raise ScenarioError(f"{where}: bad value in {text!r}") from None


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


_SCRIPT = re.compile(r"^(?:@(?P<at>\d+)\s+)?(?P<cmd>AT.*)$", re.I)


def parse_scenario(text: str, path: str | Path | None = None) -> Scenario:
    base = Path(path).parent if path is not None else Path.cwd()
    section = None
    ue: UeSpec | None = None
    values: dict[str, dict[str, tuple[int, str]]] = {s: {} for s in ("run", "enb", "phy", "core")}
    subscribers: dict[str, Subscriber] = {}
    ues: list[UeSpec] = []
    assertions: list[AssertionSpec] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        where = f"line {lineno}"
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = re.fullmatch(r"\[\s*(\w+)(?:\s+(\d+))?\s*\]", _strip_comment(stripped))
        if m:
            section = m.group(1).lower()
            if section not in SECTIONS:
                raise ScenarioError(f"{where}: unknown section [{m.group(1)}]")
            if section == "ue":
                if m.group(2) is None:
                    raise ScenarioError(f"{where}: [ue] needs an id, e.g. [ue 1]")
                uid = int(m.group(2))
                if any(u.ue_id == uid for u in ues):
                    raise ScenarioError(f"{where}: duplicate [ue {uid}]")
                ue = UeSpec(uid, "")
                ues.append(ue)
            elif m.group(2) is not None:
                raise ScenarioError(f"{where}: section [{section}] takes no id")
            continue
        if section is None:
            raise ScenarioError(f"{where}: content before the first section")

        if section == "ue":
            sm = _SCRIPT.match(stripped)
            if sm:
                at = int(sm.group("at")) if sm.group("at") else None
                ue.script.append((at, sm.group("cmd").rstrip()))
                continue
        line = _strip_comment(stripped)
        if not line:
            continue

        if section == "subscribers":
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ScenarioError(f"{where}: subscriber line needs IMSI K [CE]")
            imsi = parts[0]
            if not imsi.isdigit() or not 5 <= len(imsi) <= 15:
                raise ScenarioError(f"{where}: bad IMSI {imsi!r}")
            if imsi in subscribers:
                raise ScenarioError(f"{where}: duplicate IMSI {imsi}")
            ce = _int(parts[2], where) if len(parts) == 3 else 0
            if ce not in (0, 1, 2):
                raise ScenarioError(f"{where}: CE level must be 0..2")
            subscribers[imsi] = Subscriber(imsi, _key(parts[1], where), ce)
            continue
        if section == "assert":
            am = re.fullmatch(r"([\w.-]+)\s*:\s*(\w+)\s*(.*)", line)
            if not am:
                raise ScenarioError(f"{where}: assertion must look like 'name: kind args'")
            if am.group(2) not in ASSERTION_KINDS:
                raise ScenarioError(f"{where}: unknown assertion kind {am.group(2)!r}")
            if any(a.name == am.group(1) for a in assertions):
                raise ScenarioError(f"{where}: duplicate assertion name {am.group(1)!r}")
            assertions.append(AssertionSpec(am.group(1), am.group(2), am.group(3).strip()))
            continue

        if "=" not in line:
            raise ScenarioError(f"{where}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if section == "ue":
            if key == "imsi":
                ue.imsi = value
            elif key == "k":
                ue.k = _key(value, where)
            elif key == "ce_level":
                ue.ce_level = _int(value, where)
                if ue.ce_level not in (0, 1, 2):
                    raise ScenarioError(f"{where}: CE level must be 0..2")
            else:
                raise ScenarioError(f"{where}: unknown [ue] key {key!r}")
            continue
        if key in values[section]:
            raise ScenarioError(f"{where}: duplicate key {key!r} in [{section}]")
        values[section][key] = (lineno, value)

    return _build(values, subscribers, ues, assertions, base, path)


def _build(values, subscribers, ues, assertions, base: Path, path) -> Scenario:
    def take(section: str, key: str):
        item = values[section].pop(key, None)
        return (f"line {item[0]}", item[1]) if item else (None, None)

    where, cfg = take("enb", "config")
    if cfg is None:
        raise ScenarioError("[enb] config = PATH is required")
    sc = Scenario(path=Path(path) if path is not None else None, enb_config_path=(base / cfg).resolve())

    where, v = take("run", "length")
    if v is not None:
        sc.run_length = _int(v, where, lo=1)
    where, v = take("run", "split")
    if v is not None:
        if v == "monolithic":
            sc.split = "monolithic"
        elif re.fullmatch(r"loopback:\d+", v):
            sc.split, sc.split_port = "loopback", int(v.split(":")[1])
        else:
            raise ScenarioError(f"{where}: split must be 'monolithic' or 'loopback:PORT'")

    where, v = take("enb", "earfcn_mapping")
    if v is not None:
        if v not in ("compat", "standard"):
            raise ScenarioError(f"{where}: earfcn_mapping must be 'compat' or 'standard'")
        sc.earfcn_mapping = v
    where, v = take("enb", "scrambling")
    if v is not None:
        sc.enb_scrambling = _bool(v, where)
    for knob in MAC_KNOBS:
        where, v = take("enb", knob)
        if v is not None:
            sc.mac[knob] = _triple(v, where, int) if knob.endswith("_reps") else _int(v, where, lo=0)

    phy = {}
    for key, conv in (("seed", int), ("crc_bug", bool), ("crc_recovery", bool)):
        where, v = take("phy", key)
        if v is not None:
            phy[key] = _bool(v, where) if conv is bool else _int(v, where)
    where, v = take("phy", "loss_prob")
    if v is not None:
        phy["loss_prob"] = _triple(v, where, float)
    where, v = take("phy", "required_reps")
    if v is not None:
        phy["required_reps"] = _triple(v, where, int)
    where, v = take("phy", "preamble_script")
    if v is not None:
        words = [w.strip().lower() for w in v.split(",") if w.strip()]
        if any(w not in ("hit", "miss") for w in words):
            raise ScenarioError(f"{where}: preamble_script entries must be 'hit' or 'miss'")
        phy["preamble_script"] = tuple(w == "hit" for w in words)
    sc.phy = PhySpec(**phy)

    for key in ("identity_request", "mme_responsive"):
        where, v = take("core", key)
        if v is not None:
            setattr(sc, key, _bool(v, where))

    for section, rest in values.items():
        if rest:
            lineno, _ = next(iter(rest.values()))
            raise ScenarioError(f"line {lineno}: unknown key {next(iter(rest))!r} in [{section}]")

    for ue in ues:
        if not ue.imsi:
            raise ScenarioError(f"[ue {ue.ue_id}] has no imsi")
        if ue.imsi not in subscribers:
            raise ScenarioError(f"[ue {ue.ue_id}] imsi {ue.imsi} has no subscriber entry")
    sc.subscribers = subscribers
    sc.ues = sorted(ues, key=lambda u: u.ue_id)
    sc.assertions = assertions
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, path)


def bundled_scenarios_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def bundled_scenario(name: str) -> Path:
    p = bundled_scenarios_dir() / (name if name.endswith(".scn") else name + ".scn")
    if not p.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return p
