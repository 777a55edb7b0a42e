"""Line-oriented AT command interpreter for the simulated BC95-class modem."""

from __future__ import annotations

import csv
import ipaddress
import re

from .ue import UePhase

OK = "OK"
ERROR = "ERROR"

MAX_EARFCN = 262143
MAX_AT_PAYLOAD = 1500

# NCONFIG keys that change simulator behaviour, mapped to UeNvConfig attributes.
# The vendor CR_* names are the ones used in the BC95 setup scripts.
_BOOL_KEYS = {
    "AUTOCONNECT": "autoconnect",
    "SCRAMBLING": "scrambling",
    "CR_0354_0338_SCRAMBLING": "scrambling",
    "CR_0859_SI_AVOID": "si_avoid",
    "MULTITONE": "multitone",
}
_PDP_TYPES = ("IP", "IPV6", "IPV4V6", "NONIP")

_CMD = re.compile(r"^AT(?:\+(?P<name>[A-Z]+))?(?P<op>=\?|=|\?)?(?P<args>.*)$", re.S | re.I)


class AtError(ValueError):
    pass


def _split_args(args: str) -> list[str]:
    row = next(csv.reader([args], skipinitialspace=True), [])
    return [a.strip() for a in row]


def _int(text: str, lo: int, hi: int) -> int:
    if not re.fullmatch(r"\d+", text or ""):
        raise AtError(f"not an integer: {text!r}")
    v = int(text)
    if not lo <= v <= hi:
        raise AtError(f"{v} outside {lo}..{hi}")
    return v


def _bool(text: str) -> bool:
    if text == "TRUE":
        return True
    if text == "FALSE":
        return False
    raise AtError(f"expected TRUE or FALSE, got {text!r}")


def _nconfig(ue, op: str, args: str) -> list[str]:
    nv = ue.nv
    if op == "?":
        out = [f"+NCONFIG:{k},{'TRUE' if getattr(nv, a) else 'FALSE'}"
               for k, a in _BOOL_KEYS.items() if k in ("AUTOCONNECT", "CR_0354_0338_SCRAMBLING",
                                                       "CR_0859_SI_AVOID", "MULTITONE")]
        out.append(f"+NCONFIG:PCO_IE_TYPE,{'EPCO' if nv.pco_ie_epco else 'PCO'}")
        out.append(f"+NCONFIG:RELEASE_VERSION,{nv.release_version}")
        out += [f"+NCONFIG:{k},{v}" for k, v in nv.extra.items()]
        return out + [OK]
    parts = _split_args(args)
    if op != "=" or len(parts) != 2 or not parts[0]:
        raise AtError("NCONFIG needs <key>,<value>")
    key, value = parts[0].upper(), parts[1]
    if key in _BOOL_KEYS:
        setattr(nv, _BOOL_KEYS[key], _bool(value))
    elif key == "RELEASE_VERSION":
        v = _int(value, 13, 14)
        nv.release_version = v
    elif key == "PCO_IE_TYPE":
        if value not in ("EPCO", "PCO"):
            raise AtError("PCO_IE_TYPE must be EPCO or PCO")
        nv.pco_ie_epco = value == "EPCO"
    else:
        nv.extra[key] = value
    return [OK]


def _nearfcn(ue, op: str, args: str) -> list[str]:
    if op == "?":
        lock = ue.earfcn_lock
        return ([f"+NEARFCN:{lock[0]},{lock[1]}"] if lock else []) + [OK]
    parts = _split_args(args)
    if op != "=" or len(parts) not in (2, 3):
        raise AtError("NEARFCN needs <mode>,<earfcn>[,<pci>]")
    mode = _int(parts[0], 0, 0)
    earfcn = _int(parts[1], 0, MAX_EARFCN)
    if ue.phase in (UePhase.RACH, UePhase.RRC_CONNECTED, UePhase.ATTACHED):
        raise AtError("radio busy")
    ue.lock_earfcn(mode, earfcn)
    return [OK]


def _cgdcont(ue, op: str, args: str) -> list[str]:
    if op == "?":
        return [f'+CGDCONT:{cid},"{ctx[0]}"' for cid, ctx in sorted(ue.nv.pdp_contexts.items())] + [OK]
    parts = _split_args(args)
    if op != "=" or len(parts) < 2:
        raise AtError("CGDCONT needs <cid>,<pdp_type>[,...]")
    cid = _int(parts[0], 0, 10)
    pdp_type = parts[1].upper()
    if pdp_type not in _PDP_TYPES:
        raise AtError(f"unknown PDP type {parts[1]!r}")
    ue.nv.pdp_contexts[cid] = (pdp_type, *parts[2:])
    return [OK]


def _cgatt(ue, op: str, args: str) -> list[str]:
    if op == "?":
        return [f"+CGATT:{1 if ue.phase == UePhase.ATTACHED else 0}", OK]
    if op != "=":
        raise AtError("CGATT needs a value")
    if _int(args.strip(), 0, 1):
        ue.request_attach()
    else:
        ue.detach()
    return [OK]


def _nsocr(ue, op: str, args: str) -> list[str]:
    parts = _split_args(args)
    if op != "=" or len(parts) not in (3, 4):
        raise AtError("NSOCR needs DGRAM,17,<port>[,<listen>]")
    if parts[0].upper() != "DGRAM" or parts[1] != "17":
        raise AtError("only DGRAM/17 sockets are supported")
    port = _int(parts[2], 0, 65535)
    listen = _int(parts[3], 0, 1) if len(parts) == 4 else 1
    try:
        sid = ue.open_socket(port, bool(listen))
    except ValueError as exc:
        raise AtError(str(exc)) from None
    return [str(sid), OK]


def _nsost(ue, op: str, args: str) -> list[str]:
    parts = _split_args(args)
    if op != "=" or len(parts) != 5:
        raise AtError("NSOST needs <socket>,<ip>,<port>,<length>,<hex>")
    sid = _int(parts[0], 0, 255)
    try:
        ip = str(ipaddress.IPv4Address(parts[1]))
    except ValueError:
        raise AtError(f"bad address {parts[1]!r}") from None
    port = _int(parts[2], 0, 65535)
    length = _int(parts[3], 0, MAX_AT_PAYLOAD)
    if not re.fullmatch(r"(?:[0-9A-Fa-f]{2})*", parts[4]):
        raise AtError("payload is not hex")
    data = bytes.fromhex(parts[4])
    if len(data) != length:
        raise AtError(f"declared length {length} but {len(data)} bytes given")
    if sid not in ue.sockets:
        raise AtError(f"unknown socket {sid}")
    if ue.phase != UePhase.ATTACHED:
        raise AtError("not attached")
    ue.send_datagram(sid, ip, port, data)
    return [f"{sid},{length}"]


def _nsocl(ue, op: str, args: str) -> list[str]:
    if op != "=":
        raise AtError("NSOCL needs a socket id")
    sid = _int(args.strip(), 0, 255)
    if sid not in ue.sockets:
        raise AtError(f"unknown socket {sid}")
    ue.close_socket(sid)
    return [OK]


def _nrb(ue, op: str, args: str) -> list[str]:
    if op or args:
        raise AtError("NRB takes no arguments")
    ue.reboot()
    return ["REBOOTING", OK]


def _cimi(ue, op: str, args: str) -> list[str]:
    if op or args:
        raise AtError("CIMI takes no arguments")
    return [ue.imsi, OK]


_HANDLERS = {
    "NRB": _nrb,
    "NCONFIG": _nconfig,
    "NEARFCN": _nearfcn,
    "CGDCONT": _cgdcont,
    "CGATT": _cgatt,
    "NSOCR": _nsocr,
    "NSOST": _nsost,
    "NSOCL": _nsocl,
    "CIMI": _cimi,
}


def execute_at(line: str, ue):
    """Run one AT command line against ``ue``.

    Returns ``(response_lines, ue)``; the UE is updated in place.  Every
    failure, including unknown commands, yields ``["ERROR"]``.
    """
    text = line.strip("\r\n").strip()
    m = _CMD.match(text)
    if m is None:
        return [ERROR], ue
    name, op, args = m.group("name"), m.group("op") or "", m.group("args")
    name = name.upper() if name else None
    if name is None:
        return ([OK] if not op and not args else [ERROR]), ue
    handler = _HANDLERS.get(name)
    if handler is None or (op == "" and args):
        return [ERROR], ue
    if op == "=?":
        return [OK], ue
    try:
        return handler(ue, op, args), ue
    except AtError:
        return [ERROR], ue
