"""Recover a label set from free-form model output.

Grammar, in order of preference:

* clean: the stripped text is exactly ``d-d-...-d`` with L binary digits;
* repaired (``format``): the whole text is one L-digit code with other
  separators (commas, spaces, semicolons) and optional brackets/quotes;
* repaired (``embedded``): prose containing exactly one L-digit code
  (repeats of the same code are tolerated);
* repaired (``name-map``): every schema label appears once as
  ``NAME: d`` / ``NAME = d`` / ``"NAME": d``.

When an embedded code and a name map are both present they must agree.
Anything else fails; the raw text is always kept.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..labelspace import LabelSchema, LabelSet

CLEAN, REPAIRED, FAILED = "clean", "repaired", "failed"

_RUN = re.compile(r"(?<![\w.])[01](?:(?:\s*[-,;]\s*|\s+)[01])*(?![\w]|\.\d)")
_WRAP = " \t\r\n'\"`[](){}<>."


@dataclass(frozen=True)
class ParseOutcome:
    status: str
    labels: LabelSet | None
    raw: str
    note: str | None = None

    def __post_init__(self) -> None:
        if (self.status == FAILED) != (self.labels is None):
            raise ValueError("failed outcomes carry no label set; others must carry one")


def _digits(run: str) -> list[int]:
    return [int(c) for c in run if c in "01"]


def _name_map(text: str, schema: LabelSchema) -> tuple[LabelSet | None, str | None]:
    bits = []
    for lab in schema.labels:
        pat = re.compile(r"(?<![\w])[\"']?" + re.escape(lab) + r"[\"']?\s*[:=]\s*[\"']?([01])(?![\w.])")
        values = {m.group(1) for m in pat.finditer(text)}
        if not values:
            return None, None
        if len(values) > 1:
            return None, f"conflicting values for {lab}"
        bits.append(int(values.pop()))
    return LabelSet.from_bits(bits), None


def parse_output(text: str, schema: LabelSchema) -> ParseOutcome:
    raw = text if isinstance(text, str) else ("" if text is None else str(text))
    L = schema.L
    stripped = raw.strip()
    if re.fullmatch(r"[01](?:-[01]){%d}" % (L - 1), stripped):
        return ParseOutcome(CLEAN, LabelSet.from_bits(_digits(stripped)), raw)

    runs = [m.group(0) for m in _RUN.finditer(raw)]
    candidates = {tuple(_digits(r)) for r in runs if len(_digits(r)) == L}
    mapped, map_problem = _name_map(raw, schema)

    if len(candidates) > 1:
        return ParseOutcome(FAILED, None, raw, f"ambiguous: {len(candidates)} different candidate codes")
    if candidates:
        code = LabelSet.from_bits(next(iter(candidates)))
        if mapped is not None and mapped != code:
            return ParseOutcome(FAILED, None, raw, "embedded code disagrees with label map")
        whole = stripped.strip(_WRAP)
        if len(runs) == 1 and _RUN.fullmatch(whole):
            return ParseOutcome(REPAIRED, code, raw, "format: normalized separators/brackets")
        return ParseOutcome(REPAIRED, code, raw, "embedded: single code found in text")
    if mapped is not None:
        return ParseOutcome(REPAIRED, mapped, raw, "name-map: one value per label")
    return ParseOutcome(FAILED, None, raw, map_problem or "no binary code found")
