"""Operator command line: adapt a domain, translate an instruction,
evaluate sessions or programs, and serve the HTTP API.

stdout carries machine-readable payloads only; diagnostics go to stderr.
Exit codes: 0 success, 1 infrastructure failure, 2 non-convergence,
3 grounding failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import knowledge
from .adapt import AdaptConfig, adapt_domain
from .catalog import load_catalog
from .constructs import DomainInterface, parse_program, serialize_program
from .errors import FastprotoError, UnresolvableReference
from .metrics import (
    StepRanking,
    information_clarity,
    metrics_report,
    rendering_consistency,
    to_json,
)
from .session import SessionService
from .translate import (
    compile_program,
    ground_instruction,
    parse_modeling,
    serialize_modeling,
)

log = logging.getLogger("fastproto")

EXIT_OK = 0
EXIT_INFRA = 1
EXIT_NONCONVERGED = 2
EXIT_GROUNDING = 3


def data_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name


def _default_catalog() -> Path:
    return data_path("mini_catalog.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastproto",
        description="domain-specific interface engine for fast prototyping",
    )
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--mode", choices=("live", "stub"), default=None,
                        help="knowledge source mode (overrides KNOWLEDGE_MODE)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_adapt = sub.add_parser("adapt", help="adapt the interface DSL to a domain")
    p_adapt.add_argument("--domain", required=True)
    p_adapt.add_argument("--config", type=Path, default=None,
                         help="adaptation config JSON")
    p_adapt.add_argument("--catalog", type=Path, default=None)
    p_adapt.add_argument("--out", type=Path, default=Path("out"))

    p_tr = sub.add_parser("translate", help="ground one instruction and compile it")
    p_tr.add_argument("--interface", type=Path, required=True)
    p_tr.add_argument("--instruction", required=True)
    p_tr.add_argument("--state", type=Path, default=None,
                      help="current DSL program JSON (defaults to empty)")
    p_tr.add_argument("--catalog", type=Path, default=None)

    p_eval = sub.add_parser("eval", help="compute metrics for a session or program")
    p_eval.add_argument("--session-log", type=Path, default=None)
    p_eval.add_argument("--program", type=Path, default=None,
                        help="modeling program (JSON-lines)")
    p_eval.add_argument("--catalog", type=Path, default=None)
    p_eval.add_argument("--method", default="ours")

    p_serve = sub.add_parser("serve", help="run the session HTTP API")
    p_serve.add_argument("--addr", default="127.0.0.1:8080")
    p_serve.add_argument("--data-dir", type=Path, default=Path("sessions"))
    p_serve.add_argument("--interfaces", type=Path, default=None,
                         help="directory of adapted interface JSON files")
    p_serve.add_argument("--catalog", type=Path, default=None)
    return parser


def cmd_adapt(args) -> int:
    catalog_path = args.catalog or _default_catalog()
    if not catalog_path.exists():
        log.error("catalog file %s does not exist", catalog_path)
        return EXIT_INFRA
    try:
        catalog = load_catalog(catalog_path)
        config = AdaptConfig(seed=args.seed)
        if args.config:
            config = AdaptConfig.from_dict(json.loads(args.config.read_text()))
            config.seed = args.seed if args.seed else config.seed
        ks = knowledge.from_env(seed=config.seed, mode=args.mode)
        iface, report = adapt_domain(args.domain, config, ks, catalog)
    except FastprotoError as e:
        log.error("adaptation failed: %s", e)
        return EXIT_INFRA

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / f"interface_{args.domain}.json").write_text(iface.to_json(), encoding="utf-8")
    (out / f"report_{args.domain}.json").write_text(report.to_json(), encoding="utf-8")
    (out / f"iterations_{args.domain}.csv").write_text(report.iterations_csv(),
                                                       encoding="utf-8")
    print(json.dumps({
        "domain": args.domain,
        "converged": report.converged,
        "iterations": report.iterations_used,
        "soundness": report.soundness,
        "completeness": report.completeness,
    }))
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_translate(args) -> int:
    if not args.instruction.strip():
        print("error: instruction must be non-empty", file=sys.stderr)
        return EXIT_GROUNDING
    try:
        iface = DomainInterface.from_json(args.interface.read_text(encoding="utf-8"))
    except (OSError, FastprotoError) as e:
        log.error("cannot load interface: %s", e)
        return EXIT_INFRA
    catalog = None
    if args.catalog or _default_catalog().exists():
        try:
            catalog = load_catalog(args.catalog or _default_catalog())
        except FastprotoError as e:
            log.error("cannot load catalog: %s", e)
            return EXIT_INFRA
    state = parse_program(args.state.read_text(encoding="utf-8")) if args.state \
        else parse_program('{"Parts": {}, "Relationships": {}}')
    try:
        ks = knowledge.from_env(seed=args.seed, mode=args.mode)
        delta = ground_instruction(args.instruction, iface, state, ks=ks)
        program = state.apply_delta(delta.constructs)
        modeling = compile_program(program, catalog)
    except UnresolvableReference as e:
        log.error("grounding failed: %s", e)
        return EXIT_GROUNDING
    except FastprotoError as e:
        log.error("translation failed: %s", e)
        return EXIT_INFRA
    print(json.dumps({
        "delta": delta.to_dict(),
        "program": json.loads(serialize_program(program)),
        "modeling": serialize_modeling(modeling).splitlines(),
    }, indent=2))
    return EXIT_OK


def _session_metrics(args, catalog) -> dict:
    text = args.session_log.read_text(encoding="utf-8")
    rankings = []
    last_modeling = None
    domain = ""
    session_id = ""
    n_steps = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError:
            break
        if event.get("event") == "created":
            domain = event.get("domain", "")
            session_id = event.get("session_id", "")
        elif event.get("event") == "step":
            record = event["record"]
            n_steps += 1
            if record.get("status") == "ok" and record.get("modeling"):
                last_modeling = record["modeling"]
            if record.get("ranking"):
                rankings.append(StepRanking.from_dict(record["ranking"]))
        elif event.get("event") == "ranking":
            rankings.append(StepRanking.from_dict(event["ranking"]))
    consistency = rendering_consistency(rankings, args.method) if rankings else None
    clarity = None
    if last_modeling is not None and catalog is not None:
        clarity = information_clarity(parse_modeling(last_modeling), catalog)
    report = metrics_report(domain, session_id, consistency, clarity)
    report["n_steps"] = n_steps
    return report


def cmd_eval(args) -> int:
    if not args.session_log and not args.program:
        print("error: provide --session-log or --program", file=sys.stderr)
        return EXIT_INFRA
    catalog = None
    try:
        catalog = load_catalog(args.catalog or _default_catalog())
    except FastprotoError as e:
        log.error("cannot load catalog: %s", e)
        return EXIT_INFRA
    try:
        if args.session_log:
            report = _session_metrics(args, catalog)
        else:
            program = parse_modeling(args.program.read_text(encoding="utf-8"))
            clarity = information_clarity(program, catalog)
            report = metrics_report("", "", None, clarity)
    except FastprotoError as e:
        log.error("evaluation failed: %s", e)
        return EXIT_INFRA
    print(to_json(report))
    return EXIT_OK


def _load_interfaces(directory: Path) -> dict[str, DomainInterface]:
    interfaces: dict[str, DomainInterface] = {}
    if directory and directory.exists():
        for path in sorted(directory.glob("interface_*.json")):
            iface = DomainInterface.from_json(path.read_text(encoding="utf-8"))
            interfaces[iface.domain] = iface
    return interfaces


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    host, _, port_s = args.addr.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_s)
    except ValueError:
        log.error("invalid --addr %r", args.addr)
        return EXIT_INFRA
    try:
        catalog = load_catalog(args.catalog or _default_catalog())
        interfaces = _load_interfaces(args.interfaces or (args.data_dir / "interfaces"))
        ks = knowledge.from_env(seed=args.seed, mode=args.mode)
        service = SessionService(args.data_dir, interfaces, catalog, ks=ks)
        app = create_app(service)
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        server = uvicorn.Server(config)
        server.run()
    except FastprotoError as e:
        log.error("cannot start service: %s", e)
        return EXIT_INFRA
    except (OSError, SystemExit) as e:
        log.error("server failed to bind %s: %s", args.addr, e)
        return EXIT_INFRA
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "adapt": cmd_adapt,
        "translate": cmd_translate,
        "eval": cmd_eval,
        "serve": cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
