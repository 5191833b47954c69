"""Answer filtering and normalization.

Filtering flags improperly formatted or obviously hallucinated answers so
their patches are excluded before confidence-based selection (a failed filter
is a value, never an exception). Normalization maps answers to a canonical
form used for evaluation: coordinate equality is numeric with an absolute
tolerance of 1e-6 degrees, which preserves exactness while ignoring quote and
degree glyph variations that plain string matching would trip over.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

COORD_TOLERANCE_DEGREES = 1e-6

LATITUDE_RANGE = (-90.0, 90.0)
LONGITUDE_RANGE = (-180.0, 180.0)


class FieldKind(str, Enum):
    NUMERIC = "numeric"
    LATITUDE = "latitude"
    LONGITUDE = "longitude"
    DEPTH = "depth"
    FREE_TEXT = "free-text"


class DmsParseError(ValueError):
    """Text is not a well-formed degrees-minutes-seconds coordinate."""


class NormalizationError(ValueError):
    """Answer could not be reduced to canonical form for its field kind."""


# Typographic variants commonly produced by models and scanned sources.
_GLYPH_MAP = str.maketrans({
    "’": "'",   # right single quote
    "‘": "'",   # left single quote
    "′": "'",   # prime
    "”": '"',   # right double quote
    "“": '"',   # left double quote
    "″": '"',   # double prime
    "º": "°",  # masculine ordinal -> degree sign
    "˚": "°",  # ring above -> degree sign
    "−": "-",   # unicode minus
    " ": " ",   # no-break space
})

_NUMBER_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")
_PLAIN_NUMBER_RE = re.compile(rf"^{_NUMBER_RE.pattern}$")
_DEPTH_RE = re.compile(rf"^({_NUMBER_RE.pattern})(?:\s*([A-Za-z]+)\.?)?$")
_DECIMAL_COORD_RE = re.compile(rf"^([NSEW])?\s*({_NUMBER_RE.pattern})\s*([NSEW])?$", re.IGNORECASE)
_DMS_RE = re.compile(
    r"^([NSEW])?\s*([+-])?\s*(\d{1,3})\s*°\s*(\d{1,2})\s*'\s*"
    r"(\d{1,2}(?:\.\d+)?)\s*\"\s*([NSEW])?$",
    re.IGNORECASE,
)


def clean_text(text: str) -> str:
    """Unify glyph variants, trim, and collapse runs of whitespace."""
    return re.sub(r"\s+", " ", text.translate(_GLYPH_MAP)).strip()


def _strip_thousands(text: str) -> str:
    return re.sub(r"(?<=\d),(?=\d)", "", text)


def parse_dms(text: str) -> float:
    """Parse ``D°M'S(.s)"`` into signed decimal degrees.

    Accepts an optional hemisphere letter (prefix or suffix) and an optional
    leading sign; either a minus sign or an S/W letter makes the result
    negative. Minutes and seconds must lie in [0, 60).
    """
    cleaned = clean_text(text)
    match = _DMS_RE.match(cleaned)
    if match is None:
        raise DmsParseError(f"not a DMS coordinate: {text!r}")
    hemi_pre, sign, deg, minutes, seconds, hemi_post = match.groups()
    if hemi_pre and hemi_post:
        raise DmsParseError(f"two hemisphere letters in {text!r}")
    hemi = (hemi_pre or hemi_post or "").upper()
    m = int(minutes)
    s = float(seconds)
    if m >= 60:
        raise DmsParseError(f"minutes must be < 60, got {m}")
    if s >= 60.0:
        raise DmsParseError(f"seconds must be < 60, got {s}")
    value = int(deg) + m / 60.0 + s / 3600.0
    if sign == "-" or hemi in ("S", "W"):
        value = -value
    return value


def format_dms(degrees: float, seconds_decimals: int = 4) -> str:
    """Render decimal degrees as canonical ``D°M'S"`` (sign, not hemisphere).

    Seconds keep up to ``seconds_decimals`` fractional digits with trailing
    zeros trimmed, enough to round-trip through parse_dms within 1e-6 degrees.
    """
    sign = "-" if degrees < 0 else ""
    total = abs(degrees)
    d = int(total)
    minutes_f = (total - d) * 60.0
    m = int(minutes_f)
    s = round((minutes_f - m) * 60.0, seconds_decimals)
    if s >= 60.0:
        s -= 60.0
        m += 1
    if m >= 60:
        m -= 60
        d += 1
    s_text = f"{s:.{seconds_decimals}f}".rstrip("0").rstrip(".") or "0"
    return f"{sign}{d}°{m}'{s_text}\""


def parse_coordinate(text: str) -> float:
    """Parse either decimal degrees or DMS into signed decimal degrees."""
    cleaned = clean_text(text)
    if "°" in cleaned:
        return parse_dms(cleaned)
    match = _DECIMAL_COORD_RE.match(_strip_thousands(cleaned))
    if match is None:
        raise DmsParseError(f"not a coordinate: {text!r}")
    hemi_pre, number, hemi_post = match.groups()
    if hemi_pre and hemi_post:
        raise DmsParseError(f"two hemisphere letters in {text!r}")
    hemi = (hemi_pre or hemi_post or "").upper()
    value = float(number)
    if hemi in ("S", "W"):
        value = -abs(value)
    return value


# --- filter rules ---------------------------------------------------------
# Each rule returns True when the answer passes. Chains short-circuit on the
# first failure and report that rule's name as the reason.


def _rule_nonempty(answer: str, kind: FieldKind) -> bool:
    return bool(answer.strip())


def _rule_non_numeric(answer: str, kind: FieldKind) -> bool:
    cleaned = _strip_thousands(clean_text(answer))
    if kind is FieldKind.DEPTH:
        return _DEPTH_RE.match(cleaned) is not None
    return _PLAIN_NUMBER_RE.match(cleaned) is not None


def _rule_dms_format(answer: str, kind: FieldKind) -> bool:
    try:
        parse_coordinate(answer)
    except DmsParseError:
        return False
    return True


def _rule_range(answer: str, kind: FieldKind) -> bool:
    try:
        value = normalize(answer, kind).numeric_value
    except NormalizationError:
        return False
    if value is None or not math.isfinite(value):
        return False
    if kind is FieldKind.LATITUDE:
        return LATITUDE_RANGE[0] <= value <= LATITUDE_RANGE[1]
    if kind is FieldKind.LONGITUDE:
        return LONGITUDE_RANGE[0] <= value <= LONGITUDE_RANGE[1]
    if kind is FieldKind.DEPTH:
        return value >= 0.0
    return True


RULES = {
    "nonempty": _rule_nonempty,
    "non_numeric": _rule_non_numeric,
    "dms_format": _rule_dms_format,
    "range": _rule_range,
}

_DEFAULT_RULES: dict[FieldKind, tuple[str, ...]] = {
    FieldKind.NUMERIC: ("nonempty", "non_numeric"),
    FieldKind.DEPTH: ("nonempty", "non_numeric", "range"),
    FieldKind.LATITUDE: ("nonempty", "dms_format", "range"),
    FieldKind.LONGITUDE: ("nonempty", "dms_format", "range"),
    FieldKind.FREE_TEXT: ("nonempty",),
}


@dataclass(frozen=True)
class FilterChain:
    """Ordered filter rules for one field; evaluation short-circuits."""

    kind: FieldKind
    rules: tuple[str, ...]

    def __post_init__(self) -> None:
        unknown = [r for r in self.rules if r not in RULES]
        if unknown:
            raise ValueError(f"unknown filter rules: {unknown}; known: {sorted(RULES)}")


@dataclass(frozen=True)
class FilterResult:
    passed: bool
    reason: str | None = None


def default_chain(kind: FieldKind, rules: tuple[str, ...] | None = None) -> FilterChain:
    return FilterChain(kind=kind, rules=rules if rules is not None else _DEFAULT_RULES[kind])


def apply_filters(answer: str, chain: FilterChain) -> FilterResult:
    """Run the chain; the reason names the first failing rule."""
    for name in chain.rules:
        if not RULES[name](answer, chain.kind):
            return FilterResult(passed=False, reason=name)
    return FilterResult(passed=True)


# --- normalization --------------------------------------------------------


@dataclass(frozen=True)
class NormalizedValue:
    kind: FieldKind
    canonical_text: str
    numeric_value: float | None = None
    unit: str | None = None


def normalize(answer: str, kind: FieldKind) -> NormalizedValue:
    """Reduce an answer to canonical text plus a numeric value when the kind
    has one. Coordinates keep a DMS rendition when the source was DMS; the
    numeric value is always decimal degrees. Idempotent on its own output."""
    cleaned = clean_text(answer)
    if kind is FieldKind.FREE_TEXT:
        return NormalizedValue(kind=kind, canonical_text=cleaned)

    if kind in (FieldKind.LATITUDE, FieldKind.LONGITUDE):
        try:
            if "°" in cleaned:
                degrees = parse_dms(cleaned)
                return NormalizedValue(kind=kind, canonical_text=format_dms(degrees), numeric_value=degrees)
            degrees = parse_coordinate(cleaned)
        except DmsParseError as exc:
            raise NormalizationError(str(exc)) from exc
        text = _strip_thousands(cleaned).replace(" ", "").lstrip("+")
        hemi = re.sub(r"[0-9+.\-]", "", text).upper()
        if hemi:  # fold a hemisphere letter into the sign
            text = ("-" if degrees < 0 else "") + text.strip("NSEWnsew").lstrip("+-")
        return NormalizedValue(kind=kind, canonical_text=text, numeric_value=degrees)

    cleaned = _strip_thousands(cleaned)
    if kind is FieldKind.DEPTH:
        match = _DEPTH_RE.match(cleaned)
        if match is None:
            raise NormalizationError(f"not a depth value: {answer!r}")
        number, unit = match.group(1).lstrip("+"), match.group(2)
        unit = unit.lower() if unit else None
        canonical = f"{number} {unit}" if unit else number
        return NormalizedValue(kind=kind, canonical_text=canonical, numeric_value=float(number), unit=unit)

    # numeric
    cleaned = cleaned.replace(" ", "")
    if _PLAIN_NUMBER_RE.match(cleaned) is None:
        raise NormalizationError(f"not a numeric value: {answer!r}")
    canonical = cleaned.lstrip("+")
    return NormalizedValue(kind=kind, canonical_text=canonical, numeric_value=float(canonical))


def answers_match(predicted: str, truth: str, kind: FieldKind) -> bool:
    """Evaluation equality: coordinates within 1e-6 degrees, depth and numeric
    exact, units compared case-insensitively when both sides carry one, and
    free text by case-insensitive canonical equality. An unparseable
    prediction never matches; an unparseable truth falls back to cleaned
    case-insensitive string comparison."""
    try:
        pred = normalize(predicted, kind)
    except NormalizationError:
        return False
    try:
        ref = normalize(truth, kind)
    except NormalizationError:
        return clean_text(predicted).casefold() == clean_text(truth).casefold()

    if kind in (FieldKind.LATITUDE, FieldKind.LONGITUDE):
        assert pred.numeric_value is not None and ref.numeric_value is not None
        return abs(pred.numeric_value - ref.numeric_value) <= COORD_TOLERANCE_DEGREES
    if kind is FieldKind.DEPTH:
        if pred.numeric_value != ref.numeric_value:
            return False
        if pred.unit and ref.unit:
            return pred.unit.lower() == ref.unit.lower()
        return True
    if kind is FieldKind.NUMERIC:
        return pred.numeric_value == ref.numeric_value
    return pred.canonical_text.casefold() == ref.canonical_text.casefold()
