"""Command line front end: ``validate``, ``plan`` and ``kbgen``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import kms
from .bt import emit_xml, stn_to_bt
from .checker import check_schedule
from .enablers import extract_resources, find_enablers
from .errors import (
    ExtractionError,
    Infeasible,
    InconsistentInput,
    InconsistentMatrix,
    KBError,
    LimitExceeded,
    MalformedCompletion,
    MappingInapplicable,
    ScheduleViolation,
    SolveTimeout,
    TransportError,
    Unsolvable,
)
from .model import Problem
from .parser import parse_kb, validate_kb
from .planner import SearchLimits, TOPlan, abstraction_violations, expand_mappings, iter_plans
from .scheduler import Schedule, build_model, solve
from .stn import check_stn, to_stn

log = logging.getLogger("mapplan")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_KB = 3
EXIT_UNSOLVABLE = 4
EXIT_LIMIT = 5
EXIT_INFEASIBLE = 6
EXIT_MAPPING = 7
EXIT_INCONSISTENT = 8
EXIT_TRANSPORT = 9
EXIT_EXTRACTION = 10
EXIT_REJECTED = 11
EXIT_TIMEOUT = 12

ARTIFACTS = {
    "hl_plan": "hl_plan.txt",
    "plan": "plan.txt",
    "enablers": "enablers.txt",
    "resources": "resources.txt",
    "schedule": "schedule.json",
    "allocation": "allocated_plan.txt",
    "stn": "stn.json",
    "bt": "bt.xml",
}


class UsageError(Exception):
    pass


# -- KB loading ---------------------------------------------------------------------------


def _report(path: str, diags) -> None:
    for d in diags:
        print(f"{path}:{d}", file=sys.stderr)


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _read_text(path: str) -> str:
    return _read(path).decode("utf-8", errors="replace")


def load(path: str) -> Problem:
    result = parse_kb(_read(path))
    _report(path, result.diagnostics)
    if result.problem is None:
        raise KBError(result.diagnostics)
    return result.problem


# -- planning pipeline --------------------------------------------------------------------


@dataclass
class PlanResult:
    hl: TOPlan
    full: TOPlan
    schedule: Schedule
    artifacts: dict[str, str] = field(default_factory=dict)


def run_pipeline(
    hl_p: Problem,
    ll_p: Problem,
    limits: SearchLimits = SearchLimits(),
    timeout: float | None = None,
    retries: int = 8,
) -> PlanResult:
    """Plan, expand, lift, schedule and emit; retry later plans when scheduling is infeasible."""
    failure: Infeasible | None = None
    for attempt, hl in enumerate(iter_plans(hl_p, limits)):
        if attempt > retries:
            break
        full = expand_mappings(hl, ll_p)
        for problem in abstraction_violations(hl, hl_p, full, ll_p):
            log.warning("abstraction mismatch %s", problem)
        cat = extract_resources(ll_p, full)
        C = find_enablers(full, ll_p, cat)
        try:
            s = solve(build_model(full, C, cat, ll_p), timeout=timeout)
        except Infeasible as exc:
            log.info("plan %d cannot be scheduled (%s), trying the next one", attempt, exc)
            failure = exc
            continue
        realized = check_schedule(s, full, ll_p)
        stn = to_stn(s)
        verdict = check_stn(stn)
        if not verdict:
            raise InconsistentInput(f"STN has a negative cycle through {list(verdict.cycle)}")
        tree = stn_to_bt(stn, s, ll_p)
        artifacts = {
            "hl_plan": hl.to_text(),
            "plan": full.to_text(),
            "enablers": C.to_text(),
            "resources": cat.to_text(),
            "schedule": s.to_json(),
            "allocation": realized.to_text(),
            "stn": stn.to_json(),
            "bt": emit_xml(tree),
        }
        return PlanResult(hl, full, s, artifacts)
    raise failure or Infeasible("no plan could be scheduled")


# -- commands -----------------------------------------------------------------------------


def _transport(args) -> kms.Transport:
    if args.transport == "replay":
        return kms.ReplayTransport(Path(args.fixtures) if args.fixtures else kms.replay_dir())
    return kms.HttpTransport(url=args.endpoint, model=args.model, timeout=args.request_timeout)


def cmd_validate(args) -> int:
    errors = False
    for path in args.kb:
        result = parse_kb(_read(path))
        diags = list(result.diagnostics)
        if result.problem is not None:
            diags += validate_kb(result.problem)
        _report(path, diags)
        errors |= any(d.severity == "error" for d in diags)
        if not diags:
            print(f"{path}: ok")
    if args.queries:
        hl_q, ll_q = (_read_text(q) for q in args.queries)
        verdict = kms.validate_queries(hl_q, ll_q, _transport(args))
        if isinstance(verdict, kms.Rejected):
            print(f"queries rejected: {verdict.explanation}")
            return EXIT_REJECTED
        print("queries accepted")
    return EXIT_KB if errors else EXIT_OK


def cmd_plan(args) -> int:
    hl_p = load(args.hl)
    ll_p = load(args.ll) if args.ll else hl_p
    limits = SearchLimits(args.max_depth, args.max_expansions, not args.no_visited_pruning)
    result = run_pipeline(hl_p, ll_p, limits, args.timeout, args.retries)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.emit:
        (out / ARTIFACTS[name]).write_text(result.artifacts[name], encoding="utf-8")
    s = result.schedule
    print(f"{len(result.hl)} high-level steps, {len(result.full)} expanded steps")
    print(f"makespan {s.makespan}{'' if s.optimal else ' (time limit reached, not proven optimal)'}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_kbgen(args) -> int:
    hl_q, ll_q = _read_text(args.hl_query), _read_text(args.ll_query)
    t = _transport(args)
    if not args.skip_validation:
        verdict = kms.validate_queries(hl_q, ll_q, t)
        if isinstance(verdict, kms.Rejected):
            print(f"queries rejected: {verdict.explanation}")
            return EXIT_REJECTED
    session = kms.GenerationSession(args.mode)
    hl, ll = kms.generate_kb(session, hl_q, ll_q, t)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hl.pl").write_text(hl, encoding="utf-8")
    (out / "ll.pl").write_text(ll, encoding="utf-8")
    (out / "diagnostics.txt").write_text(session.report(), encoding="utf-8")
    print(f"{len(session.fragments)} fragments, written to {out}")
    return EXIT_OK if session.ok else EXIT_KB


# -- argument parsing ----------------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _emit_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    if names == ["all"]:
        return list(ARTIFACTS)
    bad = [x for x in names if x not in ARTIFACTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown artifact {bad[0]!r}; choose from {', '.join(ARTIFACTS)}")
    return names


def _positive(kind):
    def conv(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{text} must be positive")
        return value

    return conv


def _add_transport(p: argparse.ArgumentParser) -> None:
    p.add_argument("--transport", choices=("replay", "http"), default="replay")
    p.add_argument("--fixtures", help="replay fixture directory (default: bundled fixtures)")
    p.add_argument("--endpoint", default="https://api.openai.com/v1")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--request-timeout", type=_positive(float), default=120.0)


def _apply_config(p: argparse.ArgumentParser, cfg: dict[str, str]) -> set[str]:
    """Use config values as defaults of the matching options; return the keys used."""
    used = set()
    for a in p._actions:
        if a.dest not in cfg:
            continue
        value = cfg[a.dest]
        used.add(a.dest)
        if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            a.default = value.lower() in ("1", "true", "yes", "on")
        elif a.nargs not in (None, "?"):
            a.default = value.split()
        else:
            a.default = value  # argparse applies the option's type to string defaults
    return used


def build_parser(cfg: dict[str, str] | None = None) -> argparse.ArgumentParser:
    cfg = cfg or {}
    ap = argparse.ArgumentParser(prog="mapplan", description=__doc__)
    ap.add_argument("--config", help="key = value file; flags override it")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check KB files and optionally the task descriptions")
    v.add_argument("kb", nargs="*", default=[])
    v.add_argument("--queries", nargs=2, metavar=("HL", "LL"), help="description files to check with the chat model")
    _add_transport(v)
    v.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="plan, schedule and emit artifacts")
    p.add_argument("--hl", help="high-level KB (or a merged KB)")
    p.add_argument("--ll", help="low-level KB with mappings (defaults to --hl)")
    p.add_argument("--out", default="out")
    p.add_argument("--max-depth", type=_positive(int), default=200)
    p.add_argument("--max-expansions", type=_positive(int), default=200_000)
    p.add_argument("--no-visited-pruning", action="store_true")
    p.add_argument("--timeout", type=_positive(float), default=None, help="scheduler time limit in seconds")
    p.add_argument("--retries", type=int, default=8, help="alternative plans to try when scheduling fails")
    p.add_argument("--emit", type=_emit_list, default=list(ARTIFACTS), help="comma list of artifacts, or all")
    p.set_defaults(func=cmd_plan)

    g = sub.add_parser("kbgen", help="generate KBs from task descriptions")
    g.add_argument("--hl-query")
    g.add_argument("--ll-query")
    g.add_argument("--mode", choices=("stepwise", "whole"), default="stepwise")
    g.add_argument("--out", default="kb_out")
    g.add_argument("--skip-validation", action="store_true")
    _add_transport(g)
    g.set_defaults(func=cmd_kbgen)

    used: set[str] = set()
    for p in (v, p, g):
        used |= _apply_config(p, cfg)
    unknown = sorted(set(cfg) - used)
    if unknown:
        raise UsageError(f"unknown config key {unknown[0]!r}")
    return ap


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    cfg = read_config(known.config) if known.config else {}
    return build_parser(cfg).parse_args(argv)


def _check_required(args) -> None:
    if args.command == "plan" and not args.hl:
        raise UsageError("plan needs --hl")
    if args.command == "kbgen" and not (args.hl_query and args.ll_query):
        raise UsageError("kbgen needs --hl-query and --ll-query")
    if args.command == "validate" and not (args.kb or args.queries):
        raise UsageError("validate needs KB files or --queries")


EXIT_CODES = (
    (UsageError, EXIT_USAGE),
    (KBError, EXIT_KB),
    (Unsolvable, EXIT_UNSOLVABLE),
    (LimitExceeded, EXIT_LIMIT),
    (Infeasible, EXIT_INFEASIBLE),
    (MappingInapplicable, EXIT_MAPPING),
    (InconsistentMatrix, EXIT_INCONSISTENT),
    (ScheduleViolation, EXIT_INCONSISTENT),
    (InconsistentInput, EXIT_INCONSISTENT),
    (TransportError, EXIT_TRANSPORT),
    (MalformedCompletion, EXIT_TRANSPORT),
    (ExtractionError, EXIT_EXTRACTION),
    (SolveTimeout, EXIT_TIMEOUT),
)


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
        _check_required(args)
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"mapplan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        for kind, code in EXIT_CODES:
            if isinstance(exc, kind):
                print(f"mapplan: {type(exc).__name__}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
