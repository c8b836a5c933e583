from __future__ import annotations

import pytest

from editforge.models import EntityRef, ObjectValue, PropertyRef, Triplet
from editforge.prompts import RenderError, TemplateRegistry, render_prompt


def _triplet() -> Triplet:
    return Triplet(
        EntityRef("Q1", "Volt Europa"),
        PropertyRef("P1", "subsidiary", "A company controlled by another company."),
        ObjectValue.of_entity(EntityRef("Q2", "Volt Netherlands")),
    )


def test_builtin_templates_load():
    registry = TemplateRegistry()
    for template_id in ("update_locality", "rephrase", "persona", "mhop"):
        assert registry.get(template_id)


def test_unknown_template_id():
    with pytest.raises(RenderError):
        TemplateRegistry().get("sonnet")


def test_template_dir_override(tmp_path):
    (tmp_path / "update_locality.txt").write_text(
        "CUSTOM {subject} | {relation} | {object} | {relation_description}",
        encoding="utf-8",
    )
    registry = TemplateRegistry(tmp_path)
    prompt = render_prompt("update_locality", _triplet(), registry=registry)
    assert prompt == (
        "CUSTOM Volt Europa | subsidiary | Volt Netherlands | "
        "A company controlled by another company."
    )
    # other templates still come from the package defaults
    assert "Reformulated Question" in registry.get("rephrase")


def test_malformed_override_reports_render_error(tmp_path):
    (tmp_path / "update_locality.txt").write_text("bad {unknown_field}", encoding="utf-8")
    with pytest.raises(RenderError):
        render_prompt("update_locality", _triplet(), registry=TemplateRegistry(tmp_path))


def test_wrong_item_type_rejected():
    with pytest.raises(RenderError):
        render_prompt("mhop", _triplet())


def test_empty_relation_description_is_allowed():
    bare = Triplet(
        EntityRef("Q1", "Volt Europa"),
        PropertyRef("P1", "subsidiary"),
        ObjectValue.of_entity(EntityRef("Q2", "Volt Netherlands")),
    )
    prompt = render_prompt("update_locality", bare)
    assert "Relation Description: \n" in prompt + "\n"
