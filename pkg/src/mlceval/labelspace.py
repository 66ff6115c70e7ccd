"""Label schema, label sets, code notations, power-set ordering and patterns.

A label set is stored as an integer mask whose binary expansion is the
binary code read left to right: the first schema label is the most
significant bit.  With that layout the canonical power-set order is simply
``(popcount(mask), mask)``.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import CodeParseError, SchemaError

MAX_LABELS = 16
DEFAULT_LABELS = ("SI", "SA", "ES", "NSSI")
EMPTY_TEXTUAL = "None"

_FORBIDDEN_NAME = re.compile(r"[&+\-*\s]")


@dataclass(frozen=True)
class LabelSchema:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise SchemaError("schema needs at least one label")
        if len(labels) > MAX_LABELS:
            raise SchemaError(f"schema has {len(labels)} labels; at most {MAX_LABELS} supported")
        seen: set[str] = set()
        for name in labels:
            if not isinstance(name, str) or not name:
                raise SchemaError(f"label names must be non-empty strings, got {name!r}")
            if _FORBIDDEN_NAME.search(name):
                raise SchemaError(f"label {name!r} contains one of '&', '+', '-', '*' or whitespace")
            if name == EMPTY_TEXTUAL:
                raise SchemaError(f"{EMPTY_TEXTUAL!r} is reserved for the empty textual code")
            if name in seen:
                raise SchemaError(f"duplicate label {name!r}")
            seen.add(name)

    @property
    def L(self) -> int:
        return len(self.labels)

    @property
    def M(self) -> int:
        return 1 << len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SchemaError(f"unknown label {label!r}; schema is {list(self.labels)}") from None

    def bit(self, label_or_index: str | int) -> int:
        """Mask bit for a label name or position."""
        i = self.index(label_or_index) if isinstance(label_or_index, str) else label_or_index
        if not 0 <= i < self.L:
            raise SchemaError(f"label position {i} out of range for L={self.L}")
        return 1 << (self.L - 1 - i)

    @cached_property
    def digest(self) -> str:
        payload = json.dumps(list(self.labels), separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def full(self) -> "LabelSet":
        return LabelSet(self.M - 1, self.L)

    def empty(self) -> "LabelSet":
        return LabelSet(0, self.L)

    def from_names(self, names: Iterable[str]) -> "LabelSet":
        mask = 0
        for name in names:
            mask |= self.bit(name)
        return LabelSet(mask, self.L)

    def names(self, s: "LabelSet") -> list[str]:
        check_width(s, self)
        return [lab for i, lab in enumerate(self.labels) if s.mask & self.bit(i)]


DEFAULT_SCHEMA = LabelSchema(DEFAULT_LABELS)


def load_schema(path: str | Path) -> LabelSchema:
    """Read a schema file.

    Accepts a JSON list, a JSON object with a ``labels`` list, or plain
    text with one label name per line (blank lines and ``#`` comments skipped).
    """
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if stripped.startswith("[") or stripped.startswith("{"):
        doc = json.loads(stripped)
        labels = doc["labels"] if isinstance(doc, dict) else doc
        return LabelSchema(tuple(labels))
    names = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    return LabelSchema(tuple(names))


@dataclass(frozen=True, order=False)
class LabelSet:
    """One subset of a schema, as an integer mask of fixed width."""

    mask: int
    width: int

    def __post_init__(self) -> None:
        if not 1 <= self.width <= MAX_LABELS:
            raise SchemaError(f"label-set width {self.width} out of range")
        if not 0 <= self.mask < (1 << self.width):
            raise SchemaError(f"mask {self.mask} has bits beyond width {self.width}")

    @property
    def cardinality(self) -> int:
        return bin(self.mask).count("1")

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.mask >> (self.width - 1 - i)) & 1 for i in range(self.width))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "LabelSet":
        mask = 0
        for b in bits:
            if b not in (0, 1):
                raise SchemaError(f"bits must be 0 or 1, got {b!r}")
            mask = (mask << 1) | int(b)
        return cls(mask, len(bits))

    def __contains__(self, position: int) -> bool:
        return bool(self.mask >> (self.width - 1 - position) & 1)

    def _same(self, other: "LabelSet") -> None:
        if other.width != self.width:
            raise SchemaError(f"width mismatch: {self.width} vs {other.width}")

    def __and__(self, other: "LabelSet") -> "LabelSet":
        self._same(other)
        return LabelSet(self.mask & other.mask, self.width)

    def __or__(self, other: "LabelSet") -> "LabelSet":
        self._same(other)
        return LabelSet(self.mask | other.mask, self.width)

    def __sub__(self, other: "LabelSet") -> "LabelSet":
        self._same(other)
        return LabelSet(self.mask & ~other.mask, self.width)

    def complement(self) -> "LabelSet":
        return LabelSet(~self.mask & ((1 << self.width) - 1), self.width)

    def issubset(self, other: "LabelSet") -> bool:
        self._same(other)
        return self.mask & ~other.mask == 0

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.cardinality, self.mask)

    def __str__(self) -> str:
        return "-".join(str(b) for b in self.bits)


def check_width(s: LabelSet, schema: LabelSchema) -> None:
    if s.width != schema.L:
        raise SchemaError(f"label set width {s.width} does not match schema L={schema.L}")


# --- code notations -------------------------------------------------------

def parse_binary_code(code: str, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelSet:
    if not isinstance(code, str) or not code.strip():
        raise CodeParseError("empty binary code", str(code))
    tokens = code.strip().split("-")
    if len(tokens) != schema.L:
        raise CodeParseError(
            f"binary code {code!r} has {len(tokens)} tokens, expected {schema.L}", code
        )
    mask = 0
    for i, tok in enumerate(tokens):
        if tok not in ("0", "1"):
            raise CodeParseError(
                f"binary code {code!r}: token {i} is {tok!r}, expected '0' or '1'", code, i
            )
        mask = (mask << 1) | int(tok)
    return LabelSet(mask, schema.L)


def format_binary_code(s: LabelSet, schema: LabelSchema = DEFAULT_SCHEMA) -> str:
    check_width(s, schema)
    return str(s)


def format_semantic_code(s: LabelSet, schema: LabelSchema = DEFAULT_SCHEMA) -> str:
    check_width(s, schema)
    return "".join(("+" if b else "-") + lab for b, lab in zip(s.bits, schema.labels))


def format_textual_code(s: LabelSet, schema: LabelSchema = DEFAULT_SCHEMA) -> str:
    names = schema.names(s)
    return "&".join(names) if names else EMPTY_TEXTUAL


def format_codes(s: LabelSet, schema: LabelSchema = DEFAULT_SCHEMA) -> tuple[str, str, str]:
    """(binary, semantic, textual) codes for a label set."""
    return (
        format_binary_code(s, schema),
        format_semantic_code(s, schema),
        format_textual_code(s, schema),
    )


def parse_semantic_code(code: str, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelSet:
    text = code.strip() if isinstance(code, str) else ""
    if not text:
        raise CodeParseError("empty semantic code", str(code))
    parts = re.findall(r"([+-])([^+-]+)", text)
    if "".join(sign + name for sign, name in parts) != text:
        raise CodeParseError(f"semantic code {code!r} is not a sequence of +NAME/-NAME", code)
    if len(parts) != schema.L:
        raise CodeParseError(
            f"semantic code {code!r} has {len(parts)} entries, expected {schema.L}", code
        )
    mask = 0
    for i, ((sign, name), expected) in enumerate(zip(parts, schema.labels)):
        if name != expected:
            raise CodeParseError(
                f"semantic code {code!r}: entry {i} names {name!r}, expected {expected!r}", code, i
            )
        mask = (mask << 1) | (sign == "+")
    return LabelSet(mask, schema.L)


def parse_textual_code(code: str, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelSet:
    text = code.strip() if isinstance(code, str) else ""
    if not text:
        raise CodeParseError("empty textual code", str(code))
    if text == EMPTY_TEXTUAL:
        return schema.empty()
    mask = 0
    for i, name in enumerate(text.split("&")):
        if name not in schema.labels:
            raise CodeParseError(f"textual code {code!r}: unknown label {name!r}", code, i)
        bit = schema.bit(name)
        if mask & bit:
            raise CodeParseError(f"textual code {code!r}: label {name!r} repeated", code, i)
        mask |= bit
    return LabelSet(mask, schema.L)


def parse_code(code: str, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelSet:
    """Parse any of the binary, semantic or textual notations."""
    text = code.strip() if isinstance(code, str) else ""
    if text[:1] in ("0", "1") and set(text) <= {"0", "1", "-"}:
        return parse_binary_code(text, schema)
    if text[:1] in ("+", "-"):
        return parse_semantic_code(text, schema)
    return parse_textual_code(text, schema)


# --- power set ------------------------------------------------------------

@dataclass(frozen=True)
class PowerSetOrder:
    """All 2^L label sets in canonical order (cardinality, then code value)."""

    schema: LabelSchema
    sets: tuple[LabelSet, ...]
    _position: dict[int, int] = field(repr=False, compare=False)

    @property
    def M(self) -> int:
        return len(self.sets)

    def index(self, s: LabelSet) -> int:
        check_width(s, self.schema)
        return self._position[s.mask]

    def index_of_mask(self, mask: int) -> int:
        return self._position[mask]

    def __getitem__(self, k: int) -> LabelSet:
        return self.sets[k]

    def __iter__(self) -> Iterator[LabelSet]:
        return iter(self.sets)

    def __len__(self) -> int:
        return len(self.sets)


_ORDER_CACHE: dict[LabelSchema, PowerSetOrder] = {}


def enumerate_powerset(schema: LabelSchema = DEFAULT_SCHEMA) -> PowerSetOrder:
    if schema.L > MAX_LABELS:  # unreachable through LabelSchema, kept for direct callers
        raise SchemaError(f"L={schema.L} exceeds {MAX_LABELS}")
    cached = _ORDER_CACHE.get(schema)
    if cached is not None:
        return cached
    masks = sorted(range(schema.M), key=lambda m: (bin(m).count("1"), m))
    sets = tuple(LabelSet(m, schema.L) for m in masks)
    order = PowerSetOrder(schema, sets, {m: k for k, m in enumerate(masks)})
    _ORDER_CACHE[schema] = order
    return order


# --- wildcard patterns ----------------------------------------------------

@dataclass(frozen=True)
class LabelSetPattern:
    """Per-position tri-state pattern: required present, required absent, or wildcard."""

    present: int
    absent: int
    width: int

    def __post_init__(self) -> None:
        if self.present & self.absent:
            raise SchemaError("a position cannot be both required present and required absent")
        full = (1 << self.width) - 1
        if (self.present | self.absent) & ~full:
            raise SchemaError("pattern has bits beyond its width")

    @property
    def wildcards(self) -> int:
        free = ~(self.present | self.absent) & ((1 << self.width) - 1)
        return bin(free).count("1")

    def matches(self, s: LabelSet) -> bool:
        if s.width != self.width:
            raise SchemaError(f"width mismatch: pattern {self.width} vs set {s.width}")
        return (s.mask & self.present) == self.present and (s.mask & self.absent) == 0

    def __str__(self) -> str:
        out = []
        for i in range(self.width):
            bit = 1 << (self.width - 1 - i)
            out.append("1" if self.present & bit else "0" if self.absent & bit else "*")
        return "-".join(out)


def parse_pattern(text: str, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelSetPattern:
    """Parse ``0-1-0-*`` style patterns, or semantic ones such as ``-SI+SA*``.

    In the semantic form a trailing ``*`` wildcards every label not named.
    """
    raw = text.strip() if isinstance(text, str) else ""
    if not raw:
        raise CodeParseError("empty pattern", str(text))
    if raw[0] in "+-":
        return _parse_semantic_pattern(raw, schema)
    tokens = raw.split("-")
    if len(tokens) != schema.L:
        raise CodeParseError(f"pattern {text!r} has {len(tokens)} tokens, expected {schema.L}", text)
    present = absent = 0
    for i, tok in enumerate(tokens):
        bit = schema.bit(i)
        if tok == "1":
            present |= bit
        elif tok == "0":
            absent |= bit
        elif tok != "*":
            raise CodeParseError(
                f"pattern {text!r}: token {i} is {tok!r}, expected '0', '1' or '*'", text, i
            )
    return LabelSetPattern(present, absent, schema.L)


def _parse_semantic_pattern(raw: str, schema: LabelSchema) -> LabelSetPattern:
    open_tail = raw.endswith("*")
    body = raw[:-1] if open_tail else raw
    parts = re.findall(r"([+-])([^+-]+)", body)
    if "".join(s + n for s, n in parts) != body:
        raise CodeParseError(f"pattern {raw!r} is not a sequence of +NAME/-NAME", raw)
    present = absent = 0
    for i, (sign, name) in enumerate(parts):
        if name not in schema.labels:
            raise CodeParseError(f"pattern {raw!r}: unknown label {name!r}", raw, i)
        bit = schema.bit(name)
        if (present | absent) & bit:
            raise CodeParseError(f"pattern {raw!r}: label {name!r} repeated", raw, i)
        if sign == "+":
            present |= bit
        else:
            absent |= bit
    if not open_tail and len(parts) != schema.L:
        raise CodeParseError(
            f"pattern {raw!r} names {len(parts)} labels; list all {schema.L} or end with '*'", raw
        )
    return LabelSetPattern(present, absent, schema.L)


def match_pattern(pattern: LabelSetPattern, s: LabelSet) -> bool:
    return pattern.matches(s)


# Named groups over the first two labels, wildcarding the rest.  The
# default schema's four SI/SA groups are one such preset.
SI_SA_GROUPS: dict[str, str] = {
    "non-suicidal": "0-0-*-*",
    "SA\\SI": "0-1-*-*",
    "SI\\SA": "1-0-*-*",
    "SI&SA": "1-1-*-*",
}


def group_presets(schema: LabelSchema = DEFAULT_SCHEMA) -> dict[str, LabelSetPattern]:
    if schema.labels != DEFAULT_LABELS:
        raise SchemaError("the SI/SA group preset is defined for the default schema only")
    return {name: parse_pattern(p, schema) for name, p in SI_SA_GROUPS.items()}
