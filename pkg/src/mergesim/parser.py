"""Extraction and validation of agent replies: optional M/Y token, rationale, plan array."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

from .domain import AgentResponse, Plan
from .prompting import SchemaDescriptor

FAILURE_REASONS = ("no-code-block", "wrong-length", "out-of-range", "non-numeric", "missing-token")

_FENCE = re.compile(r"```(.*?)```", re.DOTALL)
_LANG_TAG = re.compile(r"^[A-Za-z][\w+-]*[ \t]*\n")
_TOKEN = re.compile(r"(?<![\w/'’-])([MY])(?![\w/'’-])")
_WRAPPED = re.compile(r"^(?:[A-Za-z_][\w.]*\s*=\s*)?(?:(?:np\.)?array\()?\s*\[(.*)\]\s*\)?\s*;?$", re.DOTALL)


@dataclass(frozen=True)
class ParseOutcome:
    status: str
    raw_text: str
    response: Optional[AgentResponse] = None
    failure_reason: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.status == "valid"


def _invalid(raw: str, reason: str) -> ParseOutcome:
    return ParseOutcome("invalid", raw, failure_reason=reason)


def _parse_numbers(body: str) -> Optional[list[float]]:
    body = body.strip()
    m = _WRAPPED.match(body)
    if m:
        body = m.group(1)
    # tolerate one level of nesting like [[...]]
    body = body.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    tokens = [t.strip() for t in re.split(r"[,\s]+", body) if t.strip()]
    if not tokens:
        return None
    values = []
    for tok in tokens:
        try:
            values.append(float(tok))
        except ValueError:
            return None
    return values


def parse_response(raw_text: Union[str, bytes], schema: SchemaDescriptor) -> ParseOutcome:
    """Parse a model reply; never raises on arbitrary input."""
    if isinstance(raw_text, (bytes, bytearray)):
        raw_text = bytes(raw_text).decode("utf-8", errors="replace")
    blocks = list(_FENCE.finditer(raw_text))
    if not blocks:
        return _invalid(raw_text, "no-code-block")
    block = blocks[-1]
    values = _parse_numbers(_LANG_TAG.sub("", block.group(1), count=1))
    if values is None:
        return _invalid(raw_text, "non-numeric")
    if len(values) != schema.N:
        return _invalid(raw_text, "wrong-length")
    if any(not math.isfinite(v) or v < -1.0 or v > 1.0 for v in values):
        return _invalid(raw_text, "out-of-range")

    preamble = raw_text[:block.start()]
    token = None
    if schema.requires_MY_token:
        m = _TOKEN.search(preamble)
        if m is None:
            return _invalid(raw_text, "missing-token")
        token = m.group(1)
        preamble = preamble[m.end():]
    rationale = preamble.strip()
    return ParseOutcome("valid", raw_text, response=AgentResponse(Plan(tuple(values)), token, rationale))


def render_response(response: AgentResponse) -> str:
    """Canonical text form of a response; ``parse_response`` inverts it."""
    parts = []
    if response.tactical_token is not None:
        parts.append(response.tactical_token)
    if response.rationale:
        parts.append(response.rationale)
    array = "[" + ", ".join(repr(v) for v in response.plan.normalized_values) + "]"
    parts.append(f"```python\n{array}\n```")
    return "\n".join(parts) + "\n"


def fallback_plan(last_valid: Optional[Plan], n: int) -> tuple[Plan, bool]:
    """Plan to execute when the current reply is unusable.

    Shifts ``last_valid`` past its executed elements (its ``cursor``) and pads
    with its final element back to length ``n``. Without any prior valid plan
    the result is all zeros and the second value is True so the caller can
    flag the trial.
    """
    if last_valid is None:
        return Plan.constant(0.0, n), True
    values = last_valid.normalized_values
    start = min(last_valid.cursor, len(values))
    remaining = list(values[start:])
    remaining += [values[-1]] * (n - len(remaining))
    return Plan(tuple(remaining[:n])), False
