"""Prompt templates and rendering."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..errors import ValidationError
from ..labelspace import DEFAULT_LABELS, LabelSchema

PLACEHOLDERS = frozenset({"labels", "definitions", "guideline", "output_format", "note", "example"})
BUILTIN = ("zero", "guide")

DEFAULT_DEFINITIONS: dict[str, str] = {
    "SI": "suicidal ideation: the patient has had thoughts of killing themself",
    "SA": "suicide attempt: the patient has harmed themself with at least some intent to die, without a fatal outcome",
    "ES": "exposure to suicide: someone other than the patient (family, friend) had suicidal thoughts, attempts, or died by suicide",
    "NSSI": "non-suicidal self-injury: deliberate self-harm, or thoughts of it, without intent to die",
}


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system: str
    user: str
    guideline: str | None = None

    def __post_init__(self) -> None:
        for part in (self.system, self.user):
            unknown = _fields(part) - PLACEHOLDERS
            if unknown:
                raise ValidationError(f"template {self.id!r} uses unknown placeholders {sorted(unknown)}")
        if "note" not in _fields(self.user) | _fields(self.system):
            raise ValidationError(f"template {self.id!r} never inserts the note")
        uses_guideline = "guideline" in _fields(self.user) | _fields(self.system)
        if uses_guideline and not self.guideline:
            raise ValidationError(f"template {self.id!r} references a guideline but has none")

    @classmethod
    def from_dict(cls, d: Mapping) -> "PromptTemplate":
        return cls(d.get("id", "custom"), d["system"], d["user"], d.get("guideline"))


def _fields(text: str) -> set[str]:
    try:
        return {name for _, name, _, _ in string.Formatter().parse(text) if name is not None}
    except ValueError as exc:
        raise ValidationError(f"malformed template text: {exc}") from None


def get_template(name_or_path: str) -> PromptTemplate:
    """A built-in template id ("zero", "guide") or the path of a JSON template file."""
    if name_or_path in BUILTIN:
        text = resources.files("mlceval.gateway.templates").joinpath(f"{name_or_path}.json").read_text("utf-8")
        return PromptTemplate.from_dict(json.loads(text))
    path = Path(name_or_path)
    if not path.exists():
        raise ValidationError(f"no template named {name_or_path!r} and no such file")
    return PromptTemplate.from_dict(json.loads(path.read_text(encoding="utf-8")))


def output_format(schema: LabelSchema) -> str:
    example = "-".join("1" if i % 2 == 0 else "0" for i in range(schema.L))
    order = ", ".join(schema.labels)
    return (
        f"Answer with exactly {schema.L} binary digits separated by '-', one per label in the order "
        f"{order} (1 = documented, 0 = not documented), for example {example}. "
        "Reply with the code only."
    )


def render_prompt(
    template: PromptTemplate,
    schema: LabelSchema,
    note: str,
    definitions: Mapping[str, str] | None = None,
) -> list[dict[str, str]]:
    if not isinstance(note, str) or not note.strip():
        raise ValidationError("cannot render a prompt for an empty note")
    if definitions is None:
        definitions = DEFAULT_DEFINITIONS if schema.labels == DEFAULT_LABELS else {}
    defs = "\n".join(
        f"{i + 1}. {lab}" + (f" - {definitions[lab]}" if lab in definitions else "")
        for i, lab in enumerate(schema.labels)
    )
    values = {
        "labels": ", ".join(schema.labels),
        "definitions": defs,
        "guideline": template.guideline or "",
        "output_format": output_format(schema),
        "note": note,
        "example": "-".join("0" for _ in schema.labels),
    }
    return [
        {"role": "system", "content": template.system.format(**values)},
        {"role": "user", "content": template.user.format(**values)},
    ]
