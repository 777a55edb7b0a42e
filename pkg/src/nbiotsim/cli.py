"""Command-line entry point: ``nbiotsim run | validate | at-console``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_enb_config
from .link import LinkError
from .mme import format_sink
from .scenario import ScenarioError, bundled_scenario, load_scenario
from .sim import Simulation, run_scenario
from .trace import parse_tags

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2


def _scenario_path(text: str) -> Path:
    p = Path(text)
    if p.exists() or p.suffix or "/" in text:
        return p
    return bundled_scenario(text)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    tags = parse_tags(args.filter.split(",")) if args.filter else None
    sc = load_scenario(_scenario_path(args.scenario))
    load_enb_config(sc.enb_config_path, sc.earfcn_mapping)  # fail before any partial run
    report = run_scenario(sc, seed=args.seed, split_port=args.split_port)
    if args.trace_out:
        _write(args.trace_out, report.trace_text(tags))
    if args.sink_out:
        _write(args.sink_out, format_sink(report.sink))
    for a in report.assertions:
        print(f"{'PASS' if a.passed else 'FAIL'} {a.name}: {a.detail}", file=sys.stderr)
    return EXIT_PASS if report.exit_code == 0 else EXIT_ASSERTION


def cmd_validate(args) -> int:
    cfg = load_enb_config(args.config, args.earfcn_mapping)
    print(f"ok: band {cfg.cell.eutra_band}, DL {cfg.cell.downlink_frequency_hz} Hz, "
          f"UL {cfg.cell.uplink_frequency_hz} Hz, NPDCCH period {cfg.css.period}, MME {cfg.network.mme_ipv4}")
    return EXIT_PASS


def _console_ue(sim: Simulation, ue_id: int | None):
    ues = sim.pnf.ues
    if not ues:
        raise ScenarioError("scenario has no [ue] section")
    if ue_id is None:
        return ues[0]
    for ue in ues:
        if ue.ue_id == ue_id:
            return ue
    raise ScenarioError(f"no [ue {ue_id}] in scenario")


def cmd_at_console(args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    sc = load_scenario(_scenario_path(args.scenario))
    sim = Simulation(sc, seed=args.seed)
    ue = _console_ue(sim, args.ue)
    if not args.keep_script:
        ue.at_queue.clear()
    interactive = stdin.isatty()

    def prompt():
        if interactive:
            stdout.write(f"[{sim.now} {ue.phase.value}]> ")
            stdout.flush()

    prompt()
    for raw in stdin:
        line = raw.strip()
        if not line:
            prompt()
            continue
        if line in (":quit", ":q"):
            break
        if line.startswith(":run"):
            parts = line.split()
            try:
                n = int(parts[1]) if len(parts) > 1 else 1
            except ValueError:
                stdout.write("usage: :run N\n")
                prompt()
                continue
            for _ in range(max(n, 0)):
                sim.step()
            stdout.write(f"now={sim.now} phase={ue.phase.value}\n")
        elif line == ":phase":
            stdout.write(f"{ue.phase.value}\n")
        else:
            seen = len(ue.at_log)
            ue.enqueue_at(line, sim.now)
            while len(ue.at_log) == seen:
                sim.step()
            for resp in ue.at_log[seen].responses:
                stdout.write(resp + "\n")
        stdout.flush()
        prompt()
    if args.sink_out:
        _write(args.sink_out, format_sink(sim.report().sink))
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nbiotsim", description="NB-IoT eNB, UE and MME protocol simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and check its assertions")
    r.add_argument("--scenario", required=True, help="scenario file, or the name of a bundled one")
    r.add_argument("--seed", type=int, default=None, help="override the scenario's PHY seed")
    r.add_argument("--trace-out", help="write the trace here ('-' for stdout)")
    r.add_argument("--sink-out", help="write the UDP sink records here ('-' for stdout)")
    r.add_argument("--filter", help="comma-separated trace tags to keep, e.g. NAS_DBG_NAS_MSG,S1AP")
    r.add_argument("--split-port", type=int, default=None,
                   help="run PNF and VNF as two processes over UDP ports N and N+1")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="parse and check an eNB configuration file")
    v.add_argument("--config", required=True)
    v.add_argument("--earfcn-mapping", choices=("compat", "standard"), default="compat")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("at-console", help="type AT commands at one UE while the simulation runs")
    c.add_argument("--scenario", required=True)
    c.add_argument("--ue", type=int, default=None, help="UE id (default: the lowest)")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--keep-script", action="store_true", help="keep the UE's scripted AT lines queued")
    c.add_argument("--sink-out", help="write the UDP sink records here on exit")
    c.set_defaults(func=cmd_at_console)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LinkError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
