"""Prompt template registry and rendering.

Templates are plain text files with named placeholders. The built-in
defaults ship with the package; a directory of same-named files can
override them per deployment.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional, Union

from editforge.models import QaPair, Triplet
from editforge.probes import MhopQuintuple

TEMPLATE_IDS = ("update_locality", "rephrase", "persona", "mhop")

MASK_TOKEN = "[MASKED-ENTITY-1]"


class RenderError(Exception):
    """Raised when a template placeholder cannot be filled."""

    def __init__(self, field: str, message: Optional[str] = None) -> None:
        self.field = field
        super().__init__(message or f"missing value for template field {field!r}")


class TemplateRegistry:
    def __init__(self, template_dir: Optional[Union[str, Path]] = None) -> None:
        self._dir = Path(template_dir) if template_dir else None
        self._cache: dict[str, str] = {}

    def get(self, template_id: str) -> str:
        if template_id not in TEMPLATE_IDS:
            raise RenderError("template_id", f"unknown template {template_id!r}")
        if template_id in self._cache:
            return self._cache[template_id]
        if self._dir is not None:
            override = self._dir / f"{template_id}.txt"
            if override.exists():
                text = override.read_text(encoding="utf-8")
                self._cache[template_id] = text
                return text
        text = (
            resources.files("editforge")
            .joinpath(f"templates/{template_id}.txt")
            .read_text(encoding="utf-8")
        )
        self._cache[template_id] = text
        return text


_DEFAULT_REGISTRY = TemplateRegistry()


def _require(field: str, value: str) -> str:
    if not value:
        raise RenderError(field)
    return value


def _fields_for(
    template_id: str,
    item: Union[Triplet, QaPair, MhopQuintuple],
    persona_description: str = "",
) -> dict[str, str]:
    if template_id == "update_locality":
        if not isinstance(item, Triplet):
            raise RenderError("item", "update_locality template expects a triplet")
        return {
            "subject": _require("subject", item.subject.label),
            "relation": _require("relation", item.relation.label),
            "object": _require("object", item.object.label),
            "relation_description": item.relation.description,
        }
    if template_id == "mhop":
        if not isinstance(item, MhopQuintuple):
            raise RenderError("item", "mhop template expects a quintuple")
        return {
            "entity0": _require("entity0", item.e0.label),
            "relation1": _require("relation1", item.r1.label),
            "relation2": _require("relation2", item.r2.label),
            "entity2": _require("entity2", item.e2.label),
            "relation1_description": item.r1.description,
            "relation2_description": item.r2.description,
        }
    if template_id in ("rephrase", "persona"):
        if not isinstance(item, QaPair):
            raise RenderError("item", f"{template_id} template expects a QA pair")
        fields = {
            "question": _require("question", item.question),
            "answer": _require("answer", item.answer),
        }
        if template_id == "persona":
            fields["persona_description"] = _require(
                "persona_description", persona_description
            )
        return fields
    raise RenderError("template_id", f"unknown template {template_id!r}")


def render_prompt(
    template_id: str,
    item: Union[Triplet, QaPair, MhopQuintuple],
    persona_description: str = "",
    registry: Optional[TemplateRegistry] = None,
) -> str:
    """Fill one template with the item's labels; the mhop bridge entity
    is never rendered (the template carries the mask token instead)."""
    registry = registry or _DEFAULT_REGISTRY
    template = registry.get(template_id)
    fields = _fields_for(template_id, item, persona_description)
    try:
        return template.format(**fields)
    except KeyError as exc:
        raise RenderError(str(exc.args[0])) from exc
    except (IndexError, ValueError) as exc:
        raise RenderError("template", f"malformed template {template_id}: {exc}") from exc
