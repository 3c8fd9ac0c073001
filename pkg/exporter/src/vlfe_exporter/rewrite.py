"""Instruction rewriting over the one-line provider protocol.

Reads a single JSON request line ({"instruction": ..., "items": [...]}) from
stdin and answers with exactly one prompt line of the form
"a photo of a <item>". By default a rule-based matcher picks the item; with
--llm-cmd the request is delegated to an external language-model command whose
reply must already match the template (enforced here, nonzero exit otherwise).
"""
from __future__ import annotations

import json
import re
import subprocess
import sys

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
TEMPLATE_RE = re.compile(r"^a photo of \S.*$")

SYSTEM_PROMPT = (
    "You convert a navigation instruction into a retrieval prompt. "
    "Reply with exactly one line of the form 'a photo of a <item>', choosing "
    "<item> from the provided list. No other words."
)


class RewriteError(RuntimeError):
    pass


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _subseq_at(haystack: list[str], needle: list[str]) -> int:
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i:i + len(needle)] == needle:
            return i
    return -1


def pick_item(instruction: str, items: list[str]) -> str:
    """Rule-based choice: literal token match first, then word overlap."""
    toks = _tokens(instruction)
    best = None
    for item in items:
        needle = _tokens(item)
        if not needle:
            continue
        pos = _subseq_at(toks, needle)
        if pos >= 0:
            key = (-len(needle), pos, item)
            if best is None or key < best:
                best = key
    if best is not None:
        return best[2]

    tok_set = set(toks)
    scored = [(len(tok_set & set(_tokens(item))), item) for item in items]
    overlap = max(s for s, _ in scored)
    if overlap > 0:
        return min(item for s, item in scored if s == overlap)
    raise RewriteError(f"no item relates to instruction {instruction!r}")


def rewrite_line(line: str, llm_cmd: list[str] | None = None) -> str:
    try:
        request = json.loads(line)
        instruction = request["instruction"]
        items = list(request["items"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise RewriteError(f"malformed request line: {exc}") from exc
    if not items:
        raise RewriteError("request has an empty item list")

    if llm_cmd:
        payload = json.dumps({"system": SYSTEM_PROMPT, "instruction": instruction,
                              "items": items}) + "\n"
        try:
            proc = subprocess.run(llm_cmd, input=payload.encode("utf-8"),
                                  capture_output=True, timeout=30)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RewriteError(f"llm command failed: {exc}") from exc
        if proc.returncode != 0:
            raise RewriteError(f"llm command exited {proc.returncode}")
        reply = proc.stdout.decode("utf-8", "replace").split("\n", 1)[0].strip()
        if not TEMPLATE_RE.match(reply):
            raise RewriteError(f"llm reply {reply!r} does not match the template")
        return reply

    return f"a photo of a {pick_item(instruction, items)}"


def run(stdin=None, stdout=None, llm_cmd: list[str] | None = None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    line = stdin.readline()
    try:
        reply = rewrite_line(line, llm_cmd=llm_cmd)
    except RewriteError as exc:
        sys.stderr.write(f"rewrite error: {exc}\n")
        return 2
    stdout.write(reply + "\n")
    return 0
