"""JSON/TSV codecs for intermediate pipeline artifacts, plus atomic file
writing (failed stages leave a .partial file behind, never a truncated
final artifact)."""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Union

from editforge.models import (
    ChangedTriplet,
    EntityRef,
    ObjectValue,
    PropertyRef,
    Triplet,
    TripletStore,
    _escape_field,
)
from editforge.probes import LocalityProbe, MhopQuintuple


@contextmanager
def atomic_write(path: Union[str, Path]) -> Iterator:
    """Write to <path>.partial, renaming into place only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    handle = partial.open("w", encoding="utf-8", newline="\n")
    try:
        yield handle
    except BaseException:
        handle.close()
        raise
    handle.close()
    os.replace(partial, path)


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> int:
    count = 0
    with atomic_write(path) as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    with Path(path).open(encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_json(path: Union[str, Path], data: dict) -> None:
    with atomic_write(path) as handle:
        handle.write(json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


# -- triplet-side codecs -------------------------------------------------


def entity_to_json(ref: EntityRef) -> dict:
    return {"id": ref.id, "label": ref.label}


def entity_from_json(data: dict) -> EntityRef:
    return EntityRef(id=data["id"], label=data.get("label", ""))


def property_to_json(ref: PropertyRef) -> dict:
    return {"id": ref.id, "label": ref.label, "description": ref.description}


def property_from_json(data: dict) -> PropertyRef:
    return PropertyRef(
        id=data["id"],
        label=data.get("label", ""),
        description=data.get("description", ""),
    )


def object_to_json(obj: ObjectValue) -> dict:
    if obj.is_entity:
        assert obj.entity is not None
        return {"kind": "entity", "id": obj.entity.id, "label": obj.entity.label}
    return {"kind": obj.kind, "raw": obj.raw}


def object_from_json(data: dict) -> ObjectValue:
    if data["kind"] == "entity":
        return ObjectValue.of_entity(EntityRef(data["id"], data.get("label", "")))
    return ObjectValue.literal(data.get("raw", ""), data["kind"])


def triplet_to_json(t: Triplet) -> dict:
    return {
        "subject": entity_to_json(t.subject),
        "relation": property_to_json(t.relation),
        "object": object_to_json(t.object),
    }


def triplet_from_json(data: dict) -> Triplet:
    return Triplet(
        subject=entity_from_json(data["subject"]),
        relation=property_from_json(data["relation"]),
        object=object_from_json(data["object"]),
    )


def changed_to_json(c: ChangedTriplet) -> dict:
    record = triplet_to_json(c.triplet)
    record["change_kind"] = c.change_kind
    record["old_object"] = object_to_json(c.old_object) if c.old_object else None
    return record


def changed_from_json(data: dict) -> ChangedTriplet:
    return ChangedTriplet(
        triplet=triplet_from_json(data),
        change_kind=data["change_kind"],
        old_object=object_from_json(data["old_object"]) if data.get("old_object") else None,
    )


def probe_to_json(p: LocalityProbe) -> dict:
    return {
        "changed_id": p.changed_id,
        "probe": triplet_to_json(p.probe),
        "similarity": p.similarity,
    }


def probe_from_json(data: dict) -> LocalityProbe:
    return LocalityProbe(
        changed_id=data["changed_id"],
        probe=triplet_from_json(data["probe"]),
        similarity=data["similarity"],
    )


def mhop_to_json(q: MhopQuintuple) -> dict:
    return {
        "e0": entity_to_json(q.e0),
        "r1": property_to_json(q.r1),
        "e1": entity_to_json(q.e1),
        "r2": property_to_json(q.r2),
        "e2": entity_to_json(q.e2),
        "first_id": q.first_id,
        "second_id": q.second_id,
    }


def mhop_from_json(data: dict) -> MhopQuintuple:
    return MhopQuintuple(
        e0=entity_from_json(data["e0"]),
        r1=property_from_json(data["r1"]),
        e1=entity_from_json(data["e1"]),
        r2=property_from_json(data["r2"]),
        e2=entity_from_json(data["e2"]),
        first_id=data["first_id"],
        second_id=data["second_id"],
    )


# -- canonical snapshot serialization ------------------------------------


def write_snapshot(store: TripletStore, directory: Union[str, Path]) -> None:
    """Serialize a store to the canonical TSV + label sidecar layout."""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    with atomic_write(target / "triplets.tsv") as handle:
        for sid, pid, kind, oid, raw in store.iter_rows():
            if kind == "entity":
                handle.write(f"{sid}\t{pid}\t{oid}\n")
            else:
                handle.write(f"{sid}\t{pid}\t\t{kind}\t{_escape_field(raw)}\n")
    with atomic_write(target / "labels.jsonl") as handle:
        for rid in sorted(set(store.labels) | set(store.descriptions)):
            record: dict = {"id": rid}
            if rid in store.labels:
                record["label"] = store.labels[rid]
            if rid in store.descriptions:
                record["description"] = store.descriptions[rid]
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    write_json(
        target / "meta.json",
        {
            "snapshot_date": store.meta.snapshot_date,
            "source_uri": store.meta.source_uri,
            "entity_count": store.meta.entity_count,
            "triplet_count": store.meta.triplet_count,
            "skipped_records": store.skipped_records,
            "skipped_claims": store.skipped_claims,
        },
    )
