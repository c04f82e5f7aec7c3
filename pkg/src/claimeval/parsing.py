"""Pull structured dictionaries out of free-form model responses."""

from __future__ import annotations

import ast
import json
import re
from typing import Any, Collection, Sequence

_FENCE_RE = re.compile(r"```(?:json|python)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)
_DECODER = json.JSONDecoder()


class ParseFailure(ValueError):
    """The response held no usable dictionary; ``raw`` keeps the original text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class PredictionRangeError(ParseFailure):
    pass


def _balanced_object(text: str, start: int) -> str | None:
    depth = 0
    quote = None
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if quote:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _decode_at(text: str, start: int) -> dict | None:
    try:
        obj, _ = _DECODER.raw_decode(text, start)
    except json.JSONDecodeError:
        obj = None
        chunk = _balanced_object(text, start)
        if chunk is not None:
            # models sometimes imitate the single-quoted dict in the instruction
            try:
                obj = ast.literal_eval(chunk)
            except (ValueError, SyntaxError, MemoryError, RecursionError):
                obj = None
    return obj if isinstance(obj, dict) else None


def find_dict(response: str) -> dict | None:
    """First well-formed dictionary in ``response``, looking inside code fences first."""
    candidates = [m.group(1) for m in _FENCE_RE.finditer(response)] + [response]
    for text in candidates:
        for m in re.finditer(r"\{", text):
            obj = _decode_at(text, m.start())
            if obj is not None:
                return obj
    return None


def normalize_prediction(value: Any) -> Any:
    """Integers (and integer-like strings) become int; other strings a lowercase label."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        token = value.strip().strip("'\"").strip()
        if re.fullmatch(r"-?\d+", token):
            return int(token)
        return token.lower()
    return value


def parse_structured(response: str, expected_fields: Sequence[str],
                     prediction_domain: Collection[Any] | None = None) -> dict[str, Any]:
    """Extract the first dictionary and check it carries ``expected_fields``.

    ``entailment_prediction`` is coerced to int when integer-like ("0", 1.0, True).
    With ``prediction_domain`` given, the (coerced) prediction must belong
    to it, otherwise ``PredictionRangeError``.
    """
    obj = find_dict(response or "")
    if obj is None:
        raise ParseFailure("no dictionary found in response", response)
    missing = [f for f in expected_fields if f not in obj]
    if missing:
        raise ParseFailure(f"response lacks field(s): {', '.join(missing)}", response)
    if "entailment_prediction" in obj:
        pred = normalize_prediction(obj["entailment_prediction"])
        obj["entailment_prediction"] = pred
        if prediction_domain is not None and pred not in prediction_domain:
            raise PredictionRangeError(
                f"prediction {pred!r} outside {sorted(map(str, prediction_domain))}", response
            )
    return obj


_NL_LABEL_RE = re.compile(r"\b(entailment|neutral|contradiction)\b", re.IGNORECASE)
_NL_BINARY_RE = re.compile(r"(?<![\w./])([01])(?![\w/])(?!\.\d)")


def parse_nl_binary(response: str) -> int:
    m = _NL_BINARY_RE.search(response or "")
    if m:
        return int(m.group(1))
    low = (response or "").lower()
    if re.search(r"\bnot\s+(?:be\s+)?(?:fully\s+)?entailed\b|\bno\b", low):
        return 0
    if re.search(r"\bentailed\b|\byes\b", low):
        return 1
    raise ParseFailure("no 0/1 prediction in response", response)


def parse_nl_ternary(response: str) -> str:
    m = _NL_LABEL_RE.search(response or "")
    if not m:
        raise ParseFailure("no 3-way label in response", response)
    return m.group(1).lower()
