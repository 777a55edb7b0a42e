"""Parser for the OAI-style eNB configuration file and typed extraction.

The accepted grammar is the small libconfig subset that appears in the
NB-IoT eNB sample configuration::

    name = value;          # also `name : value`, terminator `;` or `,` optional
    group = { ... };
    list  = ( { ... }, { ... } );

Values are integers (optional sign, optional ``L``/``LL`` suffix, decimal or
``0x`` hex) and double-quoted strings.  Comments run from ``#`` or ``//`` to
end of line, ``/* ... */`` blocks are also skipped.  A bare ``...`` token is
treated as an elision marker and ignored, so abbreviated listings parse.

A parsed document (a *config tree*) is a plain ``dict`` preserving
declaration order; groups are nested dicts and group-lists are lists of
dicts.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Union

from . import earfcn

ConfigValue = Union[int, str, dict, list]
ConfigTree = dict

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class ConfigError(Exception):
    """Raised for semantically invalid configuration (missing key, bad range)."""


class ConfigSyntaxError(ConfigError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*|//[^\n]*)
  | (?P<block>/\*.*?\*/)
  | (?P<ellipsis>\.\.\.)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>[+-]?(?:0[xX][0-9a-fA-F]+|[0-9]+)(?:LL|L)?(?![A-Za-z0-9_.]))
  | (?P<name>[A-Za-z_*][A-Za-z0-9_\-*]*)
  | (?P<punct>[=:;,{}()\[\]])
    """,
    re.VERBOSE | re.DOTALL,
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\", "f": "\f"}


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ConfigSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment", "block", "ellipsis"):
            tokens.append(_Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(tok: _Token) -> str:
    body = tok.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ConfigSyntaxError(f"unknown escape \\{nxt}", tok.line, tok.col + i + 1)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _int_value(tok: _Token) -> int:
    text = tok.text.rstrip("L")
    value = int(text, 0) if not re.fullmatch(r"[+-]?0[0-9]+", text) else int(text, 10)
    if not INT64_MIN <= value <= INT64_MAX:
        raise ConfigSyntaxError("integer does not fit in 64 bits", tok.line, tok.col)
    return value


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.tok
        if tok.text != text or tok.kind != "punct":
            raise ConfigSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return self.take()

    def settings(self, closer: str | None) -> dict:
        scope: dict = {}
        while True:
            tok = self.tok
            if closer is None and tok.kind == "eof":
                return scope
            if closer is not None and tok.kind == "punct" and tok.text == closer:
                return scope
            if tok.kind != "name":
                raise ConfigSyntaxError(f"expected setting name, found {tok.text or 'end of input'!r}", tok.line, tok.col)
            self.take()
            if tok.text in scope:
                raise ConfigSyntaxError(f"duplicate key {tok.text!r}", tok.line, tok.col)
            sep = self.tok
            if not (sep.kind == "punct" and sep.text in "=:"):
                raise ConfigSyntaxError(f"expected '=' after {tok.text!r}", sep.line, sep.col)
            self.take()
            scope[tok.text] = self.value()
            term = self.tok
            if term.kind == "punct" and term.text in ";,":
                self.take()

    def value(self) -> ConfigValue:
        tok = self.tok
        if tok.kind == "int":
            self.take()
            return _int_value(tok)
        if tok.kind == "string":
            self.take()
            return _unquote(tok)
        if tok.kind == "punct" and tok.text == "{":
            self.take()
            group = self.settings("}")
            self.expect("}")
            return group
        if tok.kind == "punct" and tok.text == "(":
            self.take()
            items = []
            while not (self.tok.kind == "punct" and self.tok.text == ")"):
                if not (self.tok.kind == "punct" and self.tok.text == "{"):
                    bad = self.tok
                    raise ConfigSyntaxError(f"expected '{{' in list, found {bad.text or 'end of input'!r}", bad.line, bad.col)
                items.append(self.value())
                if self.tok.kind == "punct" and self.tok.text == ",":
                    self.take()
            self.expect(")")
            return items
        raise ConfigSyntaxError(f"expected a value, found {tok.text or 'end of input'!r}", tok.line, tok.col)


def parse_config(text: str) -> ConfigTree:
    """Parse configuration text into an ordered tree of plain Python values."""
    return _Parser(text).settings(None)


def serialize(tree: ConfigTree, indent: int = 0) -> str:
    """Render a tree back to text in canonical form."""
    pad = "  " * indent
    lines = []
    for name, value in tree.items():
        lines.append(f"{pad}{name} = {_render(value, indent)};")
    return "\n".join(lines) + ("\n" if lines and indent == 0 else "")


def _render(value: ConfigValue, indent: int) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not part of the grammar; use strings")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
        escaped = escaped.replace("\r", "\\r").replace("\f", "\\f")
        return f'"{escaped}"'
    if isinstance(value, dict):
        if not value:
            return "{ }"
        inner = serialize(value, indent + 1)
        return "{\n" + inner + "\n" + "  " * indent + "}"
    if isinstance(value, list):
        if not value:
            return "( )"
        parts = [_render(item, indent + 1) for item in value]
        return "(\n" + ",\n".join("  " * (indent + 1) + p for p in parts) + "\n" + "  " * indent + ")"
    raise TypeError(f"unsupported config value {value!r}")


# ---------------------------------------------------------------------------
# typed configuration


class OperationMode(str, Enum):
    STANDALONE = "standalone"
    INBAND = "inband"
    GUARDBAND = "guardband"


class SubcarrierSpacing(str, Enum):
    KHZ15 = "khz15"
    KHZ3_75 = "khz3_75"


class Msg3RangeStart(str, Enum):
    ZERO = "zero"
    ONE_THIRD = "oneThird"
    TWO_THIRD = "twoThird"
    ONE = "one"

    @property
    def fraction(self) -> Fraction:
        return {"zero": Fraction(0), "oneThird": Fraction(1, 3),
                "twoThird": Fraction(2, 3), "one": Fraction(1)}[self.value]


class CssOffset(str, Enum):
    ZERO = "zero"
    ONE_EIGHTH = "oneEighth"
    ONE_FOURTH = "oneFourth"
    THREE_EIGHTH = "threeEighth"

    @property
    def fraction(self) -> Fraction:
        return {"zero": Fraction(0), "oneEighth": Fraction(1, 8),
                "oneFourth": Fraction(1, 4), "threeEighth": Fraction(3, 8)}[self.value]


CARRIER_BANDWIDTH_HZ = 180_000
RESPONSE_WINDOWS = (2, 3, 4, 5, 6, 7, 8, 10)
CONTENTION_TIMERS = (1, 2, 3, 4, 8, 16, 32, 64)
PREAMBLE_REPETITIONS = tuple(2**i for i in range(8))
NPDCCH_RMAX = tuple(2**i for i in range(12))
CSS_START_G = (Fraction(3, 2), Fraction(2), Fraction(4), Fraction(8),
               Fraction(16), Fraction(32), Fraction(48), Fraction(64))
NUM_CE_LEVELS = 3


@dataclass(frozen=True)
class CellConfig:
    eutra_band: int
    downlink_frequency_hz: int
    uplink_frequency_offset_hz: int
    operation_mode: OperationMode = OperationMode.STANDALONE
    subcarrier_spacing: SubcarrierSpacing = SubcarrierSpacing.KHZ15

    @property
    def uplink_frequency_hz(self) -> int:
        return self.downlink_frequency_hz + self.uplink_frequency_offset_hz

    @property
    def bandwidth_hz(self) -> int:
        return CARRIER_BANDWIDTH_HZ


@dataclass(frozen=True)
class RachCeConfig:
    response_window: int = 8
    contention_resolution_timer: int = 32
    preamble_initial_target_power_dbm: int = -90
    msg3_subcarrier_range_start: Msg3RangeStart = Msg3RangeStart.ZERO
    max_preamble_attempts_per_ce: int = 3
    repetitions_per_attempt: int = 1


@dataclass(frozen=True)
class NpdcchCssConfig:
    r_max: int = 4
    start_sf_g: Fraction = Fraction(2)
    offset_fraction: CssOffset = CssOffset.ONE_FOURTH

    @property
    def period(self) -> int:
        t = self.r_max * self.start_sf_g
        if t.denominator != 1:
            raise ConfigError(f"NPDCCH period r_max*G = {t} is not an integer")
        return int(t)

    @property
    def offset(self) -> int:
        return int(self.period * self.offset_fraction.fraction)  # floor, non-negative


@dataclass(frozen=True)
class NetworkConfig:
    mme_ipv4: str
    enb_s1_mme_ipv4_cidr: str = "127.0.0.1/32"
    enb_s1u_ipv4_cidr: str = "127.0.0.1/32"
    s1u_port: int = 2152

    @property
    def enb_ipv4(self) -> str:
        return self.enb_s1_mme_ipv4_cidr.split("/")[0]


@dataclass(frozen=True)
class EnbConfig:
    cell: CellConfig
    rach: tuple[RachCeConfig, ...]
    css: NpdcchCssConfig
    network: NetworkConfig
    enb_id: int = 0xE00
    plmn: str = "00101"
    earfcn_mapping: str = "compat"
    cell_earfcn: int | None = field(default=None)


_RACH_KEYS = {
    "response_window": ("rach_raResponseWindowSize_NB",),
    "contention_resolution_timer": ("rach_macContentionResolutionTimer_NB",),
    "preamble_initial_target_power_dbm": ("rach_preambleInitialReceivedTargetPower_NB",),
    # the sample file spells it nrprach_; the 3GPP spelling is accepted too
    "msg3_subcarrier_range_start": ("nrprach_SubcarrierMSG3_RangeStart", "nprach_SubcarrierMSG3_RangeStart"),
    "max_preamble_attempts_per_ce": ("maxNumPreambleAttemptCE_NB",),
    "repetitions_per_attempt": ("numRepetitionsPerPreambleAttempt",),
}


def _lookup(scope: dict, names: tuple[str, ...]):
    for name in names:
        if name in scope:
            return scope[name]
    return None


def _require_int(value, key: str) -> int:
    if not isinstance(value, int):
        raise ConfigError(f"{key}: expected integer, got {value!r}")
    return value


def _enum(cls, value, key: str):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ConfigError(f"{key}: {value!r} not one of {allowed}") from None


def _find_carrier(tree: ConfigTree) -> dict:
    carriers = tree.get("component_carriers")
    if carriers is None:
        enbs = tree.get("eNBs")
        if isinstance(enbs, list) and enbs:
            carriers = enbs[0].get("component_carriers")
            if carriers is None:
                return enbs[0]
    if carriers is None:
        return tree
    if isinstance(carriers, dict):
        return carriers
    if not carriers:
        raise ConfigError("component_carriers is empty")
    return carriers[0]


def _enb_scope(tree: ConfigTree) -> dict:
    enbs = tree.get("eNBs")
    if isinstance(enbs, list) and enbs:
        return enbs[0]
    return tree


def _rach_level(scope: dict, base: RachCeConfig | None) -> RachCeConfig:
    values = {}
    for attr, keys in _RACH_KEYS.items():
        raw = _lookup(scope, keys)
        if raw is None:
            continue
        if attr == "msg3_subcarrier_range_start":
            values[attr] = _enum(Msg3RangeStart, raw, keys[0])
        else:
            values[attr] = _require_int(raw, keys[0])
    cfg = RachCeConfig(**{**(base.__dict__ if base else {}), **values})
    _check_rach(cfg)
    return cfg


def _check_rach(cfg: RachCeConfig) -> None:
    if cfg.response_window not in RESPONSE_WINDOWS:
        raise ConfigError(f"rach_raResponseWindowSize_NB: {cfg.response_window} not in {RESPONSE_WINDOWS}")
    if cfg.contention_resolution_timer not in CONTENTION_TIMERS:
        raise ConfigError(
            f"rach_macContentionResolutionTimer_NB: {cfg.contention_resolution_timer} not in {CONTENTION_TIMERS}")
    if cfg.max_preamble_attempts_per_ce < 1:
        raise ConfigError("maxNumPreambleAttemptCE_NB must be >= 1")
    if cfg.repetitions_per_attempt not in PREAMBLE_REPETITIONS:
        raise ConfigError(
            f"numRepetitionsPerPreambleAttempt: {cfg.repetitions_per_attempt} not in {PREAMBLE_REPETITIONS}")
    if not -140 <= cfg.preamble_initial_target_power_dbm <= -90:
        raise ConfigError("rach_preambleInitialReceivedTargetPower_NB must lie in [-140, -90] dBm")


def _parse_g(raw) -> Fraction:
    if isinstance(raw, int):
        g = Fraction(raw)
    elif isinstance(raw, str):
        text = raw.strip().lower().lstrip("v").replace("dot", ".")
        try:
            g = Fraction(text)
        except ValueError:
            raise ConfigError(f"npdcch_StartSF_CSS_RA: cannot read {raw!r}") from None
    else:
        raise ConfigError(f"npdcch_StartSF_CSS_RA: cannot read {raw!r}")
    if g not in CSS_START_G:
        raise ConfigError(f"npdcch_StartSF_CSS_RA: {g} not an allowed multiplier")
    return g


def _ipv4(value, key: str, cidr: bool = False) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a quoted address")
    try:
        if cidr:
            ipaddress.IPv4Interface(value)
        else:
            ipaddress.IPv4Address(value)
    except ValueError:
        raise ConfigError(f"{key}: invalid IPv4 address {value!r}") from None
    return value


def extract_enb_config(tree: ConfigTree, earfcn_mapping: str = "compat") -> EnbConfig:
    """Map a parsed tree onto validated typed configuration.

    Scalar RACH parameters apply to all three CE levels; an optional
    ``rach_CE_levels = ({...}, {...}, {...});`` list overrides them per level
    (a single-entry list is replicated).
    """
    carrier = _find_carrier(tree)
    enb = _enb_scope(tree)

    band = _lookup(carrier, ("eutra_band",))
    if band is None:
        raise ConfigError("missing mandatory key 'eutra_band'")
    band = _require_int(band, "eutra_band")
    dl = _lookup(carrier, ("downlink_frequency",))
    if dl is None:
        raise ConfigError("missing mandatory key 'downlink_frequency'")
    dl = _require_int(dl, "downlink_frequency")
    if dl <= 0:
        raise ConfigError("downlink_frequency must be positive")
    offset = carrier.get("uplink_frequency_offset")
    if offset is None:
        offset = earfcn.default_duplex_offset(band)
    offset = _require_int(offset, "uplink_frequency_offset")
    if dl + offset <= 0:
        raise ConfigError("uplink frequency (downlink + offset) must be positive")
    cell = CellConfig(
        eutra_band=band,
        downlink_frequency_hz=dl,
        uplink_frequency_offset_hz=offset,
        operation_mode=_enum(OperationMode, carrier.get("nbiot_operation_mode", "standalone"), "nbiot_operation_mode"),
        subcarrier_spacing=_enum(SubcarrierSpacing, carrier.get("ul_subcarrier_spacing", "khz15"),
                                 "ul_subcarrier_spacing"),
    )

    base = _rach_level(carrier, None)
    per_level = carrier.get("rach_CE_levels")
    if per_level is None:
        rach = (base,) * NUM_CE_LEVELS
    else:
        if not isinstance(per_level, list) or len(per_level) not in (1, NUM_CE_LEVELS):
            raise ConfigError("rach_CE_levels must be a list of 1 or 3 groups")
        levels = tuple(_rach_level(group, base) for group in per_level)
        rach = levels * NUM_CE_LEVELS if len(levels) == 1 else levels

    r_max = _require_int(carrier.get("npdcch_NumRepetitions_RA", 4), "npdcch_NumRepetitions_RA")
    if r_max not in NPDCCH_RMAX:
        raise ConfigError(f"npdcch_NumRepetitions_RA: {r_max} is not a power of two in 1..2048")
    css = NpdcchCssConfig(
        r_max=r_max,
        start_sf_g=_parse_g(carrier.get("npdcch_StartSF_CSS_RA", 2)),
        offset_fraction=_enum(CssOffset, carrier.get("npdcch_Offset_RA", "oneFourth"), "npdcch_Offset_RA"),
    )
    css.period  # raises on a non-integer period

    network = _network(tree, enb)

    if earfcn_mapping not in ("compat", "standard"):
        raise ConfigError(f"unknown EARFCN mapping {earfcn_mapping!r}")
    try:
        cell_earfcn = earfcn.carrier_to_earfcn(band, dl, mapping=earfcn_mapping)
    except earfcn.EarfcnError:
        cell_earfcn = None

    extra = {}
    if "eNB_ID" in enb:
        extra["enb_id"] = _require_int(enb["eNB_ID"], "eNB_ID")
    if "plmn" in enb:
        extra["plmn"] = str(enb["plmn"])
    return EnbConfig(cell=cell, rach=rach, css=css, network=network,
                     earfcn_mapping=earfcn_mapping, cell_earfcn=cell_earfcn, **extra)


def _network(tree: ConfigTree, enb: dict) -> NetworkConfig:
    mme = _lookup(enb, ("mme_ip_address",))
    if mme is None:
        mme = tree.get("mme_ip_address")
    if isinstance(mme, list):
        mme = mme[0] if mme else None
    if not isinstance(mme, dict) or "ipv4" not in mme:
        raise ConfigError("missing mandatory key 'mme_ip_address' (ipv4)")
    mme_ip = _ipv4(mme["ipv4"], "mme_ip_address.ipv4")

    interfaces = enb.get("NETWORK_INTERFACES", tree.get("NETWORK_INTERFACES", {}))
    if not isinstance(interfaces, dict):
        raise ConfigError("NETWORK_INTERFACES must be a group")
    s1_mme = interfaces.get("ENB_IPV4_ADDRESS_FOR_S1_MME", "127.0.0.1/32")
    s1_mme = _ipv4(s1_mme, "ENB_IPV4_ADDRESS_FOR_S1_MME", cidr=True)
    s1u = _ipv4(interfaces.get("ENB_IPV4_ADDRESS_FOR_S1U", s1_mme), "ENB_IPV4_ADDRESS_FOR_S1U", cidr=True)
    # control-plane CIoT only: there is no separate user-plane endpoint
    if s1u != s1_mme:
        raise ConfigError("ENB_IPV4_ADDRESS_FOR_S1U must equal ENB_IPV4_ADDRESS_FOR_S1_MME "
                          "(control-plane-only core)")
    port = _require_int(interfaces.get("ENB_PORT_FOR_S1U", 2152), "ENB_PORT_FOR_S1U")
    if not 0 < port < 65536:
        raise ConfigError("ENB_PORT_FOR_S1U out of range")
    return NetworkConfig(mme_ipv4=mme_ip, enb_s1_mme_ipv4_cidr=s1_mme, enb_s1u_ipv4_cidr=s1u, s1u_port=port)


def load_enb_config(path, earfcn_mapping: str = "compat") -> EnbConfig:
    with open(path, encoding="utf-8") as fh:
        return extract_enb_config(parse_config(fh.read()), earfcn_mapping=earfcn_mapping)
