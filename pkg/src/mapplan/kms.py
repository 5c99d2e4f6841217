"""Chat-model assisted KB generation and query validation.

A transport turns a list of chat messages into completion text. The
replay transport looks completions up by the SHA-256 of the canonical
JSON of the messages, so test runs never touch the network.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from .errors import ExtractionError, MalformedCompletion, TransportError
from .parser import Diagnostic, parse_kb, serialize_sections

ACCEPT = "CONSISTENT"
REJECT = "INCONSISTENT"

HL_STEPS = ("general", "states", "actions")
LL_STEPS = ("general", "states", "actions", "mappings")

_INSTRUCTIONS = {
    "general": "Write the general knowledge base: grounding facts and resources declarations.",
    "states": "Write the init_state and goal_state clauses.",
    "actions": "Write the action clauses.",
    "mappings": "Write the mapping clauses from high-level start actions to low-level snap actions.",
    "whole": "Write the complete knowledge base.",
}


class Transport(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


def digest(messages: list[dict]) -> str:
    canonical = json.dumps(messages, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class HttpTransport:
    """OpenAI-compatible chat completions endpoint."""

    url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    timeout: float = 120.0
    api_key_env: str = "OPENAI_API_KEY"
    client: httpx.Client | None = None  # injected in tests

    def complete(self, messages: list[dict]) -> str:
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.model, "messages": messages, "temperature": 0}
        try:
            post = self.client.post if self.client is not None else httpx.post
            r = post(self.url.rstrip("/") + "/chat/completions", json=body, headers=headers, timeout=self.timeout)
            r.raise_for_status()
            doc = r.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise TransportError(str(exc)) from exc
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedCompletion("response has no message content") from exc


@dataclass
class ReplayTransport:
    """Serves completions stored as ``<digest>.txt`` files."""

    directory: Path
    calls: int = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        path = Path(self.directory) / f"{digest(messages)}.txt"
        if not path.is_file():
            raise TransportError(f"no recorded completion {path.name}")
        return path.read_text(encoding="utf-8")


@dataclass
class ScriptedTransport:
    """Returns the given answers in order; used to build replay fixtures."""

    answers: list[str]
    seen: list[list[dict]] = field(default_factory=list)

    def complete(self, messages: list[dict]) -> str:
        if len(self.seen) >= len(self.answers):
            raise TransportError("script exhausted")
        self.seen.append(messages)
        return self.answers[len(self.seen) - 1]


@dataclass
class RecordingTransport:
    """Forwards to another transport and stores each completion by digest."""

    inner: Transport
    directory: Path

    def complete(self, messages: list[dict]) -> str:
        text = self.inner.complete(messages)
        Path(self.directory).mkdir(parents=True, exist_ok=True)
        (Path(self.directory) / f"{digest(messages)}.txt").write_text(text, encoding="utf-8")
        return text


# -- prompts ------------------------------------------------------------------------------


DATA = Path(__file__).parent / "data"


def _prompt_file(name: str) -> str:
    return (DATA / "prompts" / name).read_text(encoding="utf-8")


def fence(text: str, lang: str = "prolog") -> str:
    return f"```{lang}\n{text.rstrip()}\n```"


@dataclass(frozen=True)
class PromptBundle:
    system: str
    examples: tuple[tuple[str, str], ...]  # (user, assistant) exchanges
    query: str

    def messages(self) -> list[dict]:
        out = [{"role": "system", "content": self.system}]
        for user, assistant in self.examples:
            out.append({"role": "user", "content": user})
            out.append({"role": "assistant", "content": assistant})
        out.append({"role": "user", "content": self.query})
        return out


def validation_bundle(hl: str, ll: str) -> PromptBundle:
    good_hl, good_ll = _prompt_file("example_hl_query.txt"), _prompt_file("example_ll_query.txt")
    bad_hl = _prompt_file("example_hl_query_bad.txt")
    examples = (
        (_validation_query(good_hl, good_ll), f"{ACCEPT}\nBoth levels describe crate c1, shelves s1 to s3 and robot r1, and carrying is enough to reach s3."),
        (
            _validation_query(bad_hl, good_ll),
            f"{REJECT}\nThe robot can only push a crate along a shelf, so nothing moves c1 from s1 to s3. "
            "Add a capability that carries a crate between shelves.",
        ),
    )
    return PromptBundle(_prompt_file("validate_system.txt"), examples, _validation_query(hl, ll))


def _validation_query(hl: str, ll: str) -> str:
    return f"High-level description:\n{hl.strip()}\n\nLow-level description:\n{ll.strip()}"


def _generation_query(level: str, step: str, hl_query: str, ll_query: str, context: list[str]) -> str:
    parts = [f"High-level description:\n{hl_query.strip()}"]
    if level == "ll":
        parts.append(f"Low-level description:\n{ll_query.strip()}")
    if context:
        parts.append("Already written:\n" + fence("\n".join(c.rstrip() for c in context)))
    where = "high-level" if level == "hl" else "low-level"
    parts.append(f"Task ({where}): {_INSTRUCTIONS[step]}")
    return "\n\n".join(parts)


def _section(level: str, step: str, sections: dict[str, str]) -> str:
    if step == "general":
        return sections["general"]
    if step == "states":
        return sections["states"]
    if step == "actions":
        return sections["hl_actions"] if level == "hl" else sections["ll_actions"]
    return sections["mappings"]


def generation_bundle(level: str, step: str, hl_query: str, ll_query: str, context: list[str]) -> PromptBundle:
    """Prompt for one step; the few-shot exchange shows the same step on the example domain."""
    ex_hl_q, ex_ll_q = _prompt_file("example_hl_query.txt"), _prompt_file("example_ll_query.txt")
    ex_hl = serialize_sections(parse_kb(_prompt_file("example_hl.pl")).problem)
    ex_ll = serialize_sections(parse_kb(_prompt_file("example_ll.pl")).problem)
    ex = ex_hl if level == "hl" else ex_ll
    if step == "whole":
        answer = "".join(ex.values())
        ex_context = ["".join(ex_hl.values())] if level == "ll" else []
    else:
        steps = HL_STEPS if level == "hl" else LL_STEPS
        answer = _section(level, step, ex)
        ex_context = ["".join(ex_hl.values())] if level == "ll" else []
        ex_context += [_section(level, s, ex) for s in steps[: steps.index(step)]]
    example = (_generation_query(level, step, ex_hl_q, ex_ll_q, ex_context), fence(answer))
    query = _generation_query(level, step, hl_query, ll_query, context)
    return PromptBundle(_prompt_file("generate_system.txt"), (example,), query)


# -- validation ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Accepted:
    note: str = ""


@dataclass(frozen=True)
class Rejected:
    explanation: str


def validate_queries(hl: str, ll: str, t: Transport) -> Accepted | Rejected:
    if not hl.strip() or not ll.strip():
        raise ValueError("both descriptions must be non-empty")
    text = t.complete(validation_bundle(hl, ll).messages())
    first, _, rest = text.strip().partition("\n")
    marker = first.strip().strip("*#: ").upper()
    if marker == ACCEPT:
        return Accepted(rest.strip())
    if marker == REJECT:
        return Rejected(rest.strip())
    raise MalformedCompletion(f"expected {ACCEPT} or {REJECT} on the first line, got {first[:60]!r}")


# -- generation ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[A-Za-z]*[ \t]*\n(.*?)```", re.S)


def extract_code(completion: str) -> str:
    blocks = _FENCE.findall(completion)
    if not blocks:
        raise ExtractionError("completion has no fenced code block")
    return "".join(b.rstrip() + "\n" for b in blocks)


@dataclass(frozen=True)
class Fragment:
    level: str
    step: str
    text: str
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)


@dataclass
class GenerationSession:
    mode: str = "stepwise"  # or "whole"
    fragments: list[Fragment] = field(default_factory=list)
    hl_text: str = ""
    ll_text: str = ""

    def __post_init__(self) -> None:
        if self.mode not in ("stepwise", "whole"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def ok(self) -> bool:
        return all(f.ok for f in self.fragments)

    def diagnostics(self) -> list[tuple[str, str, Diagnostic]]:
        return [(f.level, f.step, d) for f in self.fragments for d in f.diagnostics]

    def report(self) -> str:
        lines = [f"{lvl}/{step}: {d}" for lvl, step, d in self.diagnostics()]
        return "".join(line + "\n" for line in lines) or "no diagnostics\n"


def _run_step(session: GenerationSession, level: str, step: str, hl: str, ll: str, context: list[str], t: Transport) -> Fragment:
    bundle = generation_bundle(level, step, hl, ll, context)
    text = extract_code(t.complete(bundle.messages()))
    frag = Fragment(level, step, text, tuple(parse_kb(text).diagnostics))
    session.fragments.append(frag)
    return frag


def _assembled(session: GenerationSession, level: str, text: str) -> None:
    session.fragments.append(Fragment(level, "assembled", text, tuple(parse_kb(text).diagnostics)))


def generate_kb(session: GenerationSession, hl_query: str, ll_query: str, t: Transport) -> tuple[str, str]:
    """Run the session's prompt sequence; returns the high- and low-level KB texts."""
    if session.mode == "whole":
        hl = _run_step(session, "hl", "whole", hl_query, ll_query, [], t).text
        ll = _run_step(session, "ll", "whole", hl_query, ll_query, [hl], t).text
    else:
        done: dict[str, str] = {}
        for step in HL_STEPS:
            done[step] = _run_step(session, "hl", step, hl_query, ll_query, [done[s] for s in HL_STEPS if s in done], t).text
        hl = "".join(done[s] for s in HL_STEPS)
        ll_done: dict[str, str] = {}
        for step in LL_STEPS:
            context = [hl] + [ll_done[s] for s in LL_STEPS if s in ll_done]
            ll_done[step] = _run_step(session, "ll", step, hl_query, ll_query, context, t).text
        ll = ll_done["general"] + ll_done["states"] + done["actions"] + ll_done["actions"] + ll_done["mappings"]
        _assembled(session, "hl", hl)
        _assembled(session, "ll", ll)
    session.hl_text, session.ll_text = hl, ll
    return hl, ll


def scenario_text(name: str) -> str:
    return (DATA / "queries" / f"{name}.txt").read_text(encoding="utf-8")


def replay_dir() -> Path:
    return DATA / "kms_replay"
