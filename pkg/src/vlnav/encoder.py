"""Instruction-to-prompt encoding.

Turns a free-form navigation instruction into the standardized retrieval
prompt ("a photo of a <item>") through a deterministic template engine plus an
affordance table for indirect phrasings. An external LLM can take over prompt
generation through a one-line-in / one-line-out subprocess protocol.
"""
from __future__ import annotations

import enum
import json
import re
import subprocess
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class EmptyTokenError(ValueError):
    """Input text contains no alphanumeric content."""


class ProviderTimeoutError(RuntimeError):
    """External prompt provider did not answer in time (or failed to run)."""


class MalformedReplyError(RuntimeError):
    """External prompt provider returned an empty or unusable reply."""


class PromptSource(enum.Enum):
    TEMPLATE = "template"
    AFFORDANCE = "affordance"
    PASSTHROUGH = "passthrough"
    EXTERNAL_LLM = "external_llm"


@dataclass(frozen=True)
class Instruction:
    raw: str

    def __post_init__(self) -> None:
        if not self.raw.strip():
            raise ValueError("instruction must be nonempty")


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    ids: tuple[int, ...]


@dataclass(frozen=True)
class Prompt:
    text: str
    source: PromptSource
    matched_item: str | None = None


@dataclass(frozen=True)
class LLMProvider:
    """Handle for an external prompt generator.

    The provider command receives one JSON line on stdin
    ({"instruction": ..., "items": [...]}) and must answer with a single
    UTF-8 prompt line on stdout.
    """

    command: tuple[str, ...]
    timeout_s: float = 10.0


def fnv1a64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _U64
    return h


def tokenize(text: str) -> TokenSeq:
    """Lowercase and split on non-alphanumeric runs, preserving order."""
    tokens = tuple(_TOKEN_RE.findall(text.lower()))
    if not tokens:
        raise EmptyTokenError(f"no alphanumeric tokens in {text!r}")
    return TokenSeq(tokens=tokens, ids=tuple(fnv1a64(t) for t in tokens))


def _find_subsequence(haystack: tuple[str, ...], needle: tuple[str, ...]) -> int:
    """First index where needle occurs contiguously in haystack, else -1."""
    n, m = len(haystack), len(needle)
    if m == 0 or m > n:
        return -1
    for i in range(n - m + 1):
        if haystack[i:i + m] == needle:
            return i
    return -1


def _best_phrase_match(tokens: tuple[str, ...], phrases: list[str]) -> str | None:
    """Longest token-subsequence match; ties: earliest position, then lexicographic."""
    best: tuple[int, int, str] | None = None
    for phrase in phrases:
        try:
            needle = tokenize(phrase).tokens
        except EmptyTokenError:
            continue
        pos = _find_subsequence(tokens, needle)
        if pos < 0:
            continue
        key = (-len(needle), pos, phrase)
        if best is None or key < best:
            best = key
    return best[2] if best else None


def template_prompt(item: str) -> str:
    # Article normalized to "a" regardless of the item's initial letter.
    return f"a photo of a {item}"


def encode_instruction(instr: Instruction, items: list[str],
                       table: dict[str, str] | None = None) -> Prompt:
    """Template prompt if an item occurs, else affordance lookup, else passthrough."""
    if not items:
        raise ValueError("item list must be nonempty")
    tokens = tokenize(instr.raw).tokens

    item = _best_phrase_match(tokens, items)
    if item is not None:
        return Prompt(text=template_prompt(item), source=PromptSource.TEMPLATE, matched_item=item)

    if table:
        cue = _best_phrase_match(tokens, list(table.keys()))
        if cue is not None:
            mapped = table[cue]
            return Prompt(text=template_prompt(mapped), source=PromptSource.AFFORDANCE,
                          matched_item=mapped)

    return Prompt(text=instr.raw, source=PromptSource.PASSTHROUGH, matched_item=None)


def external_prompt(instr: Instruction, provider: LLMProvider, items: list[str],
                    table: dict[str, str] | None = None, fallback: bool = False) -> Prompt:
    """Ask the external provider for a prompt line; optionally fall back to the
    built-in encoder on any provider failure."""
    request = json.dumps({"instruction": instr.raw, "items": list(items)}) + "\n"
    try:
        proc = subprocess.run(
            list(provider.command),
            input=request.encode("utf-8"),
            capture_output=True,
            timeout=provider.timeout_s,
        )
        if proc.returncode != 0:
            raise MalformedReplyError(
                f"provider exited with {proc.returncode}: {proc.stderr.decode('utf-8', 'replace').strip()}")
        line = proc.stdout.decode("utf-8", "replace").split("\n", 1)[0].strip()
        if not line:
            raise MalformedReplyError("provider returned an empty line")
        return Prompt(text=line, source=PromptSource.EXTERNAL_LLM, matched_item=None)
    except (subprocess.TimeoutExpired, FileNotFoundError, OSError) as exc:
        if fallback:
            return encode_instruction(instr, items, table)
        raise ProviderTimeoutError(f"provider {provider.command} unreachable: {exc}") from exc
    except MalformedReplyError:
        if fallback:
            return encode_instruction(instr, items, table)
        raise
