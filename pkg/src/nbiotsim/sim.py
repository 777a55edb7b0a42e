"""Event loop tying PHY, eNB stack, MME and UEs together; assertion checks and run reports.

Per subframe ``t`` the PNF side resolves radio events ending at ``t`` and
sends the resulting indications followed by ``SubframeIndication(t)``.  The
VNF side (MAC, RRC, S1AP, MME) answers with ``DlConfigRequest(t)`` and
``UlConfigRequest(t)``; the PNF applies them and finally the UEs run.
Monolithic mode carries the frames over in-process queues, split mode over
UDP loopback with the VNF in a child process.
"""

from __future__ import annotations

import multiprocessing as mp
import operator
import re
from dataclasses import dataclass, field

from . import clock
from .config import EnbConfig, load_enb_config
from .fapi import (DlConfigRequest, FapiDecodeError, SubframeIndication, UlConfigRequest, decode, encode)
from .link import LinkError, LoopbackEndpoint, open_link
from .mac import MacParams, MacScheduler
from .enb import EnbRrc
from .mme import Mme, UdpSinkRecord
from .phy import DecodeModel, Phy
from .scenario import AssertionSpec, Scenario
from .trace import Tag, TraceEvent, Tracer, filter_trace, format_trace, sort_events
from .ue import AtExchange, Ue, UeNvConfig, UeTiming

SPLIT_TICK_TIMEOUT = 2.0


# ---------------------------------------------------------------------------
# VNF and PNF halves


@dataclass(frozen=True)
class VnfSettings:
    enb: EnbConfig
    subscribers: dict
    mac: dict
    identity_request: bool
    mme_responsive: bool
    seed: int


class Vnf:
    """MAC, RRC and the S1-attached MME, driven only by FAPI frames."""

    def __init__(self, s: VnfSettings, tracer: Tracer | None = None):
        self.tracer = tracer or Tracer()
        enb_s1, self.mme_s1 = open_link("inprocess")
        self.mme = Mme(s.subscribers, self.tracer, identity_request=s.identity_request,
                       responsive=s.mme_responsive, seed=s.seed)
        self.rrc = EnbRrc(self.tracer, enb_s1, enb_id=s.enb.enb_id, plmn=s.enb.plmn)
        self.mac = MacScheduler(s.enb, self.tracer, MacParams(**s.mac), upper=self.rrc)
        self.rrc.mac = self.mac
        self.now = -1
        self.indications: list = []

    def on_frame(self, frame: bytes) -> list[bytes]:
        try:
            msg = decode(frame)
        except FapiDecodeError as exc:
            self.tracer.emit(max(self.now, 0), Tag.WARN, "mac", 0, f"fapi_decode_error {exc}")
            return []
        if not isinstance(msg, SubframeIndication):
            self.indications.append(msg)
            return []
        now = clock.unwrap(msg.sfn, msg.sf, self.now + 1)
        if self.now < 0:
            self.rrc.start(now)
            self.mme.pump(self.mme_s1, now)
            self.rrc.pump_s1(now)
        elif now != self.now + 1:
            self.tracer.emit(now, Tag.WARN, "mac", 0, f"subframe_gap missing={now - self.now - 1}")
        self.now = now
        inds, self.indications = self.indications, []
        dl, ul = self.mac.tick(now, inds)
        self.mme.pump(self.mme_s1, now)
        self.rrc.pump_s1(now)
        return [encode(dl), encode(ul)]


class Pnf:
    def __init__(self, sc: Scenario, enb: EnbConfig, seed: int, tracer: Tracer | None = None):
        self.tracer = tracer or Tracer()
        model = DecodeModel(required_reps=sc.phy.required_reps, rng_seed=seed, loss_prob=sc.phy.loss_prob,
                            crc_bug_enabled=sc.phy.crc_bug, crc_recovery_enabled=sc.phy.crc_recovery,
                            enb_scrambling=sc.enb_scrambling, preamble_script=sc.phy.preamble_script)
        self.phy = Phy(model, self.tracer)
        harq_delay = sc.mac.get("harq_ack_delay", MacParams.harq_ack_delay)
        self.ues: list[Ue] = []
        for spec in sc.ues:
            ue = Ue(spec.ue_id, spec.imsi, sc.sim_key(spec), enb, ce_level=sc.ce_level(spec), nv=UeNvConfig(),
                    tracer=self.tracer, phy=self.phy, seed=seed, timing=UeTiming(harq_ack_delay=harq_delay))
            for at, line in spec.script:
                ue.enqueue_at(line, at)
            self.phy.attach_ue(ue)
            self.ues.append(ue)

    def begin(self, now: int) -> list[bytes]:
        inds = self.phy.phy_stage(now)
        sfn, sf = clock.sfn_sf(now)
        return [encode(i) for i in inds] + [encode(SubframeIndication(sfn, sf))]

    def finish(self, now: int, dl: DlConfigRequest | None, ul: UlConfigRequest | None) -> None:
        if dl is not None:
            self.phy.apply_dl_config(now, dl)
        if ul is not None:
            self.phy.apply_ul_config(now, ul)
        for ue in self.ues:
            ue.tick(now)


# ---------------------------------------------------------------------------
# simulations


@dataclass
class UeSummary:
    ue_id: int
    imsi: str
    phase: str
    assigned_ip: str | None
    preambles_sent: int
    at_log: list[AtExchange]


@dataclass
class AssertionResult:
    name: str
    passed: bool
    detail: str


@dataclass
class RunReport:
    events: list[TraceEvent]
    sink: list[UdpSinkRecord]
    ues: dict[int, UeSummary]
    counters: dict = field(default_factory=dict)
    assertions: list[AssertionResult] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if all(a.passed for a in self.assertions) else 1

    def trace_text(self, tags=None) -> str:
        events = self.events if tags is None else filter_trace(self.events, tags)
        return format_trace(events)


def _vnf_settings(sc: Scenario, enb: EnbConfig, seed: int) -> VnfSettings:
    return VnfSettings(enb, {imsi: s.k for imsi, s in sc.subscribers.items()}, dict(sc.mac),
                       sc.identity_request, sc.mme_responsive, seed)


def _summaries(pnf: Pnf) -> dict[int, UeSummary]:
    return {u.ue_id: UeSummary(u.ue_id, u.imsi, u.phase.value, u.assigned_ip, u.preambles_sent, list(u.at_log))
            for u in pnf.ues}


class Simulation:
    """Monolithic run: both halves in this process, frames through in-process queues."""

    def __init__(self, sc: Scenario, seed: int | None = None, enb: EnbConfig | None = None):
        self.scenario = sc
        self.seed = sc.phy.seed if seed is None else seed
        self.enb = enb or load_enb_config(sc.enb_config_path, sc.earfcn_mapping)
        self.tracer = Tracer()
        self.pnf = Pnf(sc, self.enb, self.seed, self.tracer)
        self.vnf = Vnf(_vnf_settings(sc, self.enb, self.seed), self.tracer)
        self.pnf_ep, self.vnf_ep = open_link("inprocess")
        self.now = 0

    def step(self) -> None:
        now = self.now
        for frame in self.pnf.begin(now):
            self.pnf_ep.send(frame)
        while (frame := self.vnf_ep.recv()) is not None:
            for reply in self.vnf.on_frame(frame):
                self.vnf_ep.send(reply)
        dl = ul = None
        while (frame := self.pnf_ep.recv()) is not None:
            msg = decode(frame)
            if isinstance(msg, DlConfigRequest):
                dl = msg
            elif isinstance(msg, UlConfigRequest):
                ul = msg
        self.pnf.finish(now, dl, ul)
        self.now += 1

    def run(self, length: int | None = None) -> RunReport:
        for _ in range(self.scenario.run_length if length is None else length):
            self.step()
        return self.report()

    def report(self) -> RunReport:
        counters = dict(self.vnf.mac.counters)
        counters.update({f"phy_{k}": v for k, v in self.pnf.phy.stats.items()})
        return RunReport(sort_events(self.tracer.events), list(self.vnf.mme.sink), _summaries(self.pnf), counters)


def _vnf_process(conn, settings: VnfSettings, port: int) -> None:
    tracer = Tracer()
    try:
        ep = LoopbackEndpoint(port + 1, port)
    except LinkError as exc:
        conn.send(("error", str(exc)))
        return
    vnf = Vnf(settings, tracer)
    conn.send(("ready", None))
    while True:
        if conn.poll():
            cmd = conn.recv()
            if cmd == "stop":
                break
        frame = ep.recv(0.05)
        if frame is None:
            continue
        for reply in vnf.on_frame(frame):
            ep.send(reply)
    ep.close()
    counters = dict(vnf.mac.counters)
    conn.send(("done", (tracer.events, vnf.mme.sink, counters)))


def run_split(sc: Scenario, port: int, seed: int | None = None, pnf_drop=None,
              tick_timeout: float = SPLIT_TICK_TIMEOUT) -> RunReport:
    """Run with the VNF in a separate process, linked over UDP loopback."""
    seed = sc.phy.seed if seed is None else seed
    enb = load_enb_config(sc.enb_config_path, sc.earfcn_mapping)
    tracer = Tracer()
    pnf = Pnf(sc, enb, seed, tracer)
    ep = LoopbackEndpoint(port, port + 1)
    ep.drop = pnf_drop
    ctx = mp.get_context("spawn")
    parent, child = ctx.Pipe()
    proc = ctx.Process(target=_vnf_process, args=(child, _vnf_settings(sc, enb, seed), port), daemon=True)
    proc.start()
    try:
        if not parent.poll(30):
            raise LinkError("VNF process did not start")
        status, info = parent.recv()
        if status != "ready":
            raise LinkError(f"VNF failed: {info}")
        for now in range(sc.run_length):
            for frame in pnf.begin(now):
                ep.send(frame)
            want = clock.sfn_sf(now)
            dl = ul = None
            while dl is None or ul is None:
                frame = ep.recv(tick_timeout)
                if frame is None:
                    tracer.emit(now, Tag.WARN, "phy", 0, "config_timeout")
                    break
                msg = decode(frame)
                if (msg.sfn, msg.sf) != want:
                    continue  # stale answer for a subframe already given up on
                if isinstance(msg, DlConfigRequest):
                    dl = msg
                elif isinstance(msg, UlConfigRequest):
                    ul = msg
            pnf.finish(now, dl, ul)
        parent.send("stop")
        if not parent.poll(30):
            raise LinkError("VNF process did not report results")
        _, (vnf_events, sink, counters) = parent.recv()
    finally:
        ep.close()
        proc.join(5)
        if proc.is_alive():
            proc.terminate()
    counters.update({f"phy_{k}": v for k, v in pnf.phy.stats.items()})
    return RunReport(sort_events(tracer.events + list(vnf_events)), list(sink), _summaries(pnf), counters)


# ---------------------------------------------------------------------------
# assertions


NAS_ALIASES = {"DL": "DownlinkNASTransport", "UL": "UplinkNASTransport"}
ATTACH_WITH_DATA_PATTERN = ("S1SetupRequest", "S1SetupResponse", "InitialUEMessage",
                            "DL", "UL", "DL", "UL", "DL", "UL", "DL", "UL", "UL")


@dataclass(frozen=True)
class SequenceMatch:
    passed: bool
    position: int | None
    detail: str


def s1ap_projection(events) -> list[str]:
    return [e.verb for e in events if e.tag == Tag.S1AP]


def _item_matches(item: str, name: str) -> bool:
    if item == "?":
        return True
    head, _, tail = item.partition("/")
    head = NAS_ALIASES.get(head, head)
    full = f"{head}/{tail}" if tail else head
    return name == full or name.startswith(full + "/")


def assert_s1ap_sequence(trace, expected) -> SequenceMatch:
    """Match the S1AP projection of ``trace`` against ``expected``.

    Pattern items name a message type (``DL``/``UL`` abbreviate the NAS
    transports) optionally followed by ``/NasMessage``; ``?`` matches any
    one message; a trailing ``*`` or ``+`` repeats an item zero/one or more
    times.  On failure ``position`` is the first projection index that could
    not be matched.
    """
    seq = trace if trace and isinstance(trace[0], str) else s1ap_projection(trace)
    items = []
    for raw in expected:
        raw = raw.strip()
        if raw.endswith(("*", "+")) and len(raw) > 1:
            items.append((raw[:-1], raw[-1]))
        else:
            items.append((raw, ""))
    furthest = [0]
    memo = {}

    def match(i: int, j: int) -> bool:
        if (i, j) in memo:
            return memo[(i, j)]
        furthest[0] = max(furthest[0], i)
        if j == len(items):
            ok = i == len(seq)
        else:
            item, rep = items[j]
            here = i < len(seq) and _item_matches(item, seq[i])
            if rep == "*":
                ok = match(i, j + 1) or (here and match(i + 1, j))
            elif rep == "+":
                ok = here and (match(i + 1, j) or match(i + 1, j + 1))
            else:
                ok = here and match(i + 1, j + 1)
        memo[(i, j)] = ok
        return ok

    if match(0, 0):
        return SequenceMatch(True, None, f"{len(seq)} messages matched")
    pos = furthest[0]
    got = seq[pos] if pos < len(seq) else "<end of trace>"
    return SequenceMatch(False, pos, f"mismatch at position {pos}: got {got}")


_OPS = {"==": operator.eq, "!=": operator.ne, ">=": operator.ge, "<=": operator.le, ">": operator.gt,
        "<": operator.lt}
_SELECTOR = re.compile(r"^(?P<tag>\w+)(?::(?P<verb>[\w/]+))?(?:@(?P<comp>\w+)(?:/(?P<ent>\d+))?)?"
                       r"(?:\[(?P<filt>[^\]]*)\])?$")


def select_events(events, selector: str) -> list[TraceEvent]:
    """Events matching ``TAG[:verb][@component[/entity]][key=value,...]``."""
    m = _SELECTOR.match(selector.strip())
    if not m:
        raise ValueError(f"bad trace selector {selector!r}")
    tag = Tag(m.group("tag").upper())
    filt = {}
    if m.group("filt"):
        for kv in m.group("filt").split(","):
            k, _, v = kv.partition("=")
            filt[k.strip()] = v.strip()
    out = []
    for e in events:
        if e.tag != tag or (m.group("verb") and e.verb != m.group("verb")):
            continue
        if m.group("comp") and e.component != m.group("comp"):
            continue
        if m.group("ent") and e.entity != int(m.group("ent")):
            continue
        if filt and any(e.fields().get(k) != v for k, v in filt.items()):
            continue
        out.append(e)
    return out


def _compare(args: str) -> tuple:
    m = re.fullmatch(r"(.*?)\s*(==|!=|>=|<=|>|<)\s*(\d+)", args.strip())
    if not m:
        raise ValueError(f"expected '<subject> <op> <n>', got {args!r}")
    return m.group(1), _OPS[m.group(2)], m.group(2), int(m.group(3))


def evaluate_assertion(a: AssertionSpec, report: RunReport) -> AssertionResult:
    try:
        if a.kind == "s1ap_sequence":
            pattern = [p for p in a.args.split(",") if p.strip()]
            res = assert_s1ap_sequence(report.events, pattern)
            return AssertionResult(a.name, res.passed, res.detail)
        if a.kind == "sink_count":
            _, op, sym, n = _compare("sink " + a.args if a.args[:1] in "=!<>" else "sink == " + a.args)
            got = len(report.sink)
            return AssertionResult(a.name, op(got, n), f"sink has {got} records, expected {sym} {n}")
        if a.kind == "sink_record":
            dest, hexdata = a.args.split()
            ip, port = dest.rsplit(":", 1)
            want = (ip, int(port), bytes.fromhex(hexdata))
            hits = [r for r in report.sink if (r.dest_ip, r.dest_port, r.payload) == want]
            return AssertionResult(a.name, len(hits) == 1, f"{len(hits)} matching records")
        if a.kind == "trace_count":
            selector, op, sym, n = _compare(a.args)
            got = len(select_events(report.events, selector))
            return AssertionResult(a.name, op(got, n), f"{got} events, expected {sym} {n}")
        if a.kind == "at_response":
            ue_id, command, expected = a.args.split(None, 2)
            ue = report.ues[int(ue_id)]
            want = tuple(expected.split("|"))
            hits = [x for x in ue.at_log if x.command.upper().startswith(command.upper())]
            if not hits:
                return AssertionResult(a.name, False, f"UE {ue_id} never ran {command}")
            got = hits[-1].responses
            return AssertionResult(a.name, got == want, f"last {command} answered {list(got)}")
        if a.kind == "ue_phase":
            ue_id, phase = a.args.split()
            got = report.ues[int(ue_id)].phase
            return AssertionResult(a.name, got == phase.upper(), f"UE {ue_id} ended in {got}")
    except (ValueError, KeyError) as exc:
        return AssertionResult(a.name, False, f"malformed assertion: {exc}")
    return AssertionResult(a.name, False, f"unknown kind {a.kind}")


def run_scenario(sc: Scenario, seed: int | None = None, split_port: int | None = None) -> RunReport:
    """Run a scenario and evaluate its assertions.

    ``split_port`` forces split mode on that port; otherwise the scenario's
    own ``split`` setting applies.
    """
    port = split_port if split_port is not None else (sc.split_port if sc.split == "loopback" else None)
    report = run_split(sc, port, seed) if port is not None else Simulation(sc, seed).run()
    report.assertions = [evaluate_assertion(a, report) for a in sc.assertions]
    return report
