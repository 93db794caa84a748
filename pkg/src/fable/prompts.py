"""Prompt templates for the generation stages.

Templates are plain text files with ``{placeholder}`` fields; ship as
editable assets under ``fable/templates/`` and may be overridden with a
directory of same-named files. Each template's content digest goes into
the run manifest.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import ValidationError
from .util import sha256_hex

STAGES = ("summarize", "similar", "dissimilar", "regenerate")

REQUIRED_PLACEHOLDERS: Mapping[str, frozenset[str]] = {
    "summarize": frozenset({"document", "facet"}),
    "similar": frozenset({"facet"}),
    "dissimilar": frozenset({"facet"}),
    "regenerate": frozenset({"facet", "score"}),
}

KNOWN_PLACEHOLDERS = frozenset({"document", "facet", "summary", "score", "low", "high"})


@dataclass(frozen=True)
class PromptTemplate:
    stage: str
    text: str

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValidationError(f"unknown template stage '{self.stage}'")
        fields = placeholders(self.text)
        unknown = fields - KNOWN_PLACEHOLDERS
        if unknown:
            raise ValidationError(
                f"template for stage '{self.stage}' uses unknown placeholders "
                f"{sorted(unknown)}"
            )
        missing = REQUIRED_PLACEHOLDERS[self.stage] - fields
        if missing:
            raise ValidationError(
                f"template for stage '{self.stage}' is missing required "
                f"placeholders {sorted(missing)}"
            )

    @property
    def hash(self) -> str:
        return sha256_hex(self.text)

    def render(self, **values: Any) -> str:
        fields = placeholders(self.text)
        missing = fields - set(values)
        if missing:
            raise ValidationError(
                f"no value for placeholders {sorted(missing)} in stage "
                f"'{self.stage}' template"
            )
        return self.text.format(**{k: values[k] for k in fields})


def placeholders(text: str) -> set[str]:
    fields = set()
    for _, field_name, _, _ in string.Formatter().parse(text):
        if field_name:
            fields.add(field_name)
    return fields


def load_templates(template_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load all four stage templates, from a directory or the packaged
    defaults. A directory must contain ``<stage>.txt`` for every stage."""
    templates: dict[str, PromptTemplate] = {}
    if template_dir is not None:
        base = Path(template_dir)
        for stage in STAGES:
            path = base / f"{stage}.txt"
            if not path.exists():
                raise ValidationError(f"template file missing: {path}")
            templates[stage] = PromptTemplate(stage, path.read_text(encoding="utf-8"))
        return templates
    package_files = resources.files("fable") / "templates"
    for stage in STAGES:
        text = (package_files / f"{stage}.txt").read_text(encoding="utf-8")
        templates[stage] = PromptTemplate(stage, text)
    return templates


def template_hashes(templates: Mapping[str, PromptTemplate]) -> dict[str, str]:
    return {stage: template.hash for stage, template in sorted(templates.items())}
