"""Parsing of scalar answer tokens: numbers, booleans, units.

Financial text writes the same quantity many ways — "7 million" vs
"7,000,000", "23%" vs "0.23", "$1,334" — so gold answers and extracted
answers go through one shared parser that strips currency/thousands
noise, applies magnitude words, and records a unit hint for the
evaluator's scale sweep.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

MAGNITUDE_WORDS = {
    "thousand": (1_000.0, "thousand"),
    "million": (1_000_000.0, "million"),
    "billion": (1_000_000_000.0, "billion"),
}

BOOLEAN_WORDS = {"yes": True, "true": True, "no": False, "false": False}

# A number token: optional sign, optional $, digits with optional
# thousands commas and decimal part, optional exponent.
_NUMBER = r"[-+]?\$?\d[\d,]*(?:\.\d+)?(?:[eE][-+]?\d+)?"
_NUMBER_RE = re.compile(_NUMBER)
_BOOLEAN_RE = re.compile(r"\b(yes|no|true|false)\b", re.IGNORECASE)
_MAGNITUDE_RE = re.compile(r"\s*(thousand|million|billion)\b", re.IGNORECASE)
_PERCENT_RE = re.compile(r"\s?%")


@dataclass(frozen=True)
class ScalarValue:
    """A parsed scalar answer: a number or truth value plus a unit hint.

    ``unit`` is advisory ("percent", "thousand", "million", "billion") and
    never changes how two values compare — the evaluator's scale sweep
    owns unit reconciliation.
    """

    value: float | bool
    unit: str | None = None

    @property
    def is_boolean(self) -> bool:
        return isinstance(self.value, bool)


def clean_number_token(token: str) -> str:
    """Strip currency signs, thousands commas, and stray whitespace."""
    return token.replace(",", "").replace("$", "").strip()


def _scan_number(text: str, match: re.Match) -> tuple[ScalarValue, int]:
    """Turn a number-regex match into a ScalarValue, consuming any
    magnitude word or percent sign that follows it."""
    value = float(clean_number_token(match.group(0)))
    unit = None
    end = match.end()
    mag = _MAGNITUDE_RE.match(text, end)
    if mag:
        factor, unit = MAGNITUDE_WORDS[mag.group(1).lower()]
        value *= factor
        end = mag.end()
    else:
        pct = _PERCENT_RE.match(text, end)
        if pct:
            unit = "percent"
            end = pct.end()
    return ScalarValue(value, unit), end


def find_scalar(text: str) -> ScalarValue | None:
    """Find the first scalar in free text: a standalone boolean word or a
    number token, whichever appears first. Returns None when neither occurs."""
    bool_match = _BOOLEAN_RE.search(text)
    num_match = _NUMBER_RE.search(text)
    if bool_match and (num_match is None or bool_match.start() <= num_match.start()):
        return ScalarValue(BOOLEAN_WORDS[bool_match.group(1).lower()])
    if num_match:
        value, _ = _scan_number(text, num_match)
        return value
    return None


def parse_scalar(raw: object) -> ScalarValue | None:
    """Parse a whole gold-answer field into a scalar, or None if it is
    genuinely textual.

    Accepts numbers directly and strings like "282.0", "no", "23%",
    "$1,334", "7 million". A string must contain nothing but the scalar
    (plus unit decoration) — "about 5" is textual, not a scalar.
    """
    if isinstance(raw, bool):
        return ScalarValue(raw)
    if isinstance(raw, (int, float)):
        return ScalarValue(float(raw))
    if not isinstance(raw, str):
        return None
    text = raw.strip()
    if not text:
        return None
    word = text.lower().rstrip(".")
    if word in BOOLEAN_WORDS:
        return ScalarValue(BOOLEAN_WORDS[word])
    match = _NUMBER_RE.match(text)
    if match is None:
        return None
    value, end = _scan_number(text, match)
    return value if text[end:].strip() == "" else None
