"""Core domain types shared across the pipeline: entity/property references,
fact triplets, snapshot stores, diff results, and QA pairs."""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

ENTITY_ID_RE = re.compile(r"^[A-Z][0-9]+$")

LITERAL_KINDS = ("quantity", "time", "coordinate", "string", "other")

QA_KINDS = ("update", "locality", "rephrase", "persona", "mhop")


@dataclass(frozen=True)
class EntityRef:
    """An entity identifier plus its (possibly unresolved) display label."""

    id: str
    label: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be non-empty")

    @property
    def is_wellformed(self) -> bool:
        return bool(ENTITY_ID_RE.match(self.id))


@dataclass(frozen=True)
class PropertyRef:
    """A relation identifier with label and free-text description."""

    id: str
    label: str = ""
    description: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("property id must be non-empty")


@dataclass(frozen=True)
class ObjectValue:
    """Tagged union: either an entity reference or a typed literal."""

    kind: str  # "entity" or one of LITERAL_KINDS
    entity: Optional[EntityRef] = None
    raw: str = ""

    def __post_init__(self) -> None:
        if self.kind == "entity":
            if self.entity is None:
                raise ValueError("entity-kind object requires an entity ref")
        elif self.kind not in LITERAL_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")

    @classmethod
    def of_entity(cls, ref: EntityRef) -> "ObjectValue":
        return cls(kind="entity", entity=ref)

    @classmethod
    def literal(cls, raw: str, kind: str = "string") -> "ObjectValue":
        return cls(kind=kind, raw=raw)

    @property
    def is_entity(self) -> bool:
        return self.kind == "entity"

    @property
    def label(self) -> str:
        """Display text: entity label for entities, raw text for literals."""
        return self.entity.label if self.entity is not None else self.raw

    @property
    def key(self) -> str:
        """Identity key used for object comparison and uids."""
        if self.entity is not None:
            return self.entity.id
        digest = hashlib.sha1(f"{self.kind}:{self.raw}".encode("utf-8")).hexdigest()
        return f"lit-{digest[:12]}"

    def same_value(self, other: "ObjectValue") -> bool:
        return self.key == other.key


@dataclass(frozen=True)
class Triplet:
    """One subject-relation-object fact."""

    subject: EntityRef
    relation: PropertyRef
    object: ObjectValue

    @property
    def key(self) -> tuple[str, str]:
        """Grouping key: (subject id, relation id)."""
        return (self.subject.id, self.relation.id)

    @property
    def uid(self) -> str:
        """Stable content-derived identifier."""
        return f"{self.subject.id}.{self.relation.id}.{self.object.key}"

    @property
    def unresolved(self) -> bool:
        """True when any label needed for prompting is missing."""
        if not self.subject.label or not self.relation.label:
            return True
        if self.object.is_entity and not self.object.label:
            return True
        return False


@dataclass
class SnapshotMeta:
    snapshot_date: str = ""
    source_uri: str = ""
    entity_count: int = 0
    triplet_count: int = 0


# Compact row form used for storage and spooling:
# (subject_id, relation_id, object_kind, object_entity_id, object_raw)
Row = tuple[str, str, str, str, str]

_ROW_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}


def _escape_field(text: str) -> str:
    for src, dst in _ROW_ESCAPES.items():
        text = text.replace(src, dst)
    return text


def _unescape_field(text: str) -> str:
    out: list[str] = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
    return "".join(out)


def row_of_triplet(t: Triplet) -> Row:
    obj = t.object
    if obj.is_entity:
        assert obj.entity is not None
        return (t.subject.id, t.relation.id, "entity", obj.entity.id, "")
    return (t.subject.id, t.relation.id, obj.kind, "", obj.raw)


class TripletStore:
    """A multiset of triplets from one snapshot plus its label tables.

    Rows are held in memory until `spool_threshold` is exceeded, after
    which they spill to a temp file so peak memory tracks the label
    table, not the dump size. The store is append-only during parsing
    and treated as immutable afterwards (safe to share across threads).
    """

    def __init__(
        self,
        meta: Optional[SnapshotMeta] = None,
        spool_threshold: Optional[int] = None,
        spool_dir: Optional[str] = None,
    ) -> None:
        self.meta = meta or SnapshotMeta()
        self.labels: dict[str, str] = {}
        self.descriptions: dict[str, str] = {}
        self.resolved = False
        self.unresolved_count = 0
        self.skipped_records = 0
        self.skipped_claims = 0
        self._rows: list[Row] = []
        self._count = 0
        self._spool_threshold = spool_threshold
        self._spool_dir = spool_dir
        self._spool_path: Optional[str] = None
        self._spool_handle = None

    # -- construction -------------------------------------------------

    @classmethod
    def from_triplets(
        cls,
        triplets: Iterable[Triplet],
        meta: Optional[SnapshotMeta] = None,
    ) -> "TripletStore":
        """Build an in-memory store; labels are lifted from the triplets."""
        store = cls(meta=meta)
        for t in triplets:
            store.labels.setdefault(t.subject.id, t.subject.label)
            store.labels.setdefault(t.relation.id, t.relation.label)
            if t.relation.description:
                store.descriptions.setdefault(t.relation.id, t.relation.description)
            if t.object.entity is not None:
                store.labels.setdefault(t.object.entity.id, t.object.entity.label)
            store.add_row(row_of_triplet(t))
        store.finish()
        store.resolve()
        return store

    def add_row(self, row: Row) -> None:
        self._count += 1
        if self._spool_handle is not None:
            self._write_spool_row(row)
            return
        self._rows.append(row)
        if self._spool_threshold is not None and len(self._rows) > self._spool_threshold:
            self._open_spool()

    def _open_spool(self) -> None:
        fd, path = tempfile.mkstemp(
            prefix="editforge-spool-", suffix=".tsv", dir=self._spool_dir
        )
        self._spool_path = path
        self._spool_handle = os.fdopen(fd, "w", encoding="utf-8")
        for row in self._rows:
            self._write_spool_row(row)
        self._rows = []

    def _write_spool_row(self, row: Row) -> None:
        assert self._spool_handle is not None
        self._spool_handle.write("\t".join(_escape_field(f) for f in row) + "\n")

    def finish(self) -> None:
        """Seal the store after parsing; flushes any spool buffer."""
        if self._spool_handle is not None:
            self._spool_handle.close()
            self._spool_handle = None
        self.meta.triplet_count = self._count

    def resolve(self) -> None:
        """Mark labels as applied and count triplets left unresolved."""
        self.resolved = True
        self.unresolved_count = sum(1 for t in self.iter_triplets() if t.unresolved)

    # -- access --------------------------------------------------------

    def __len__(self) -> int:
        return self._count

    @property
    def triplet_count(self) -> int:
        return self._count

    def iter_rows(self) -> Iterator[Row]:
        if self._spool_path is not None:
            with open(self._spool_path, encoding="utf-8") as handle:
                for line in handle:
                    parts = line.rstrip("\n").split("\t")
                    yield tuple(_unescape_field(p) for p in parts)  # type: ignore[misc]
        else:
            yield from self._rows

    def materialize(self, row: Row) -> Triplet:
        sid, pid, kind, oid, raw = row
        subject = EntityRef(sid, self.labels.get(sid, ""))
        relation = PropertyRef(
            pid, self.labels.get(pid, ""), self.descriptions.get(pid, "")
        )
        if kind == "entity":
            obj = ObjectValue.of_entity(EntityRef(oid, self.labels.get(oid, "")))
        else:
            obj = ObjectValue.literal(raw, kind)
        return Triplet(subject, relation, obj)

    def iter_triplets(self) -> Iterator[Triplet]:
        for row in self.iter_rows():
            yield self.materialize(row)

    def lookup(self, subject_id: str, relation_id: str) -> list[Triplet]:
        """All objects recorded for one (subject, relation) key."""
        return [
            self.materialize(row)
            for row in self.iter_rows()
            if row[0] == subject_id and row[1] == relation_id
        ]

    def row_multiset(self) -> dict[Row, int]:
        counts: dict[Row, int] = {}
        for row in self.iter_rows():
            counts[row] = counts.get(row, 0) + 1
        return counts

    def cleanup(self) -> None:
        """Remove the spool file, if any. Safe to call more than once."""
        if self._spool_path is not None and os.path.exists(self._spool_path):
            os.unlink(self._spool_path)
            self._spool_path = None


@dataclass(frozen=True)
class ChangedTriplet:
    """A triplet that is new or modified relative to the older snapshot."""

    triplet: Triplet
    change_kind: str  # "new" | "modified"
    old_object: Optional[ObjectValue] = None

    def __post_init__(self) -> None:
        if self.change_kind not in ("new", "modified"):
            raise ValueError(f"unknown change kind {self.change_kind!r}")
        modified = self.old_object is not None and not self.old_object.same_value(
            self.triplet.object
        )
        if (self.change_kind == "modified") != modified:
            raise ValueError(
                "change_kind 'modified' requires a differing old_object"
            )

    @property
    def uid(self) -> str:
        return self.triplet.uid


@dataclass
class DiffResult:
    """Partition of the new snapshot into unchanged, changed, and
    ambiguous-key triplets (the last are removed downstream by the
    nondeterminism filter)."""

    static_set: list[Triplet] = field(default_factory=list)
    changed_set: list[ChangedTriplet] = field(default_factory=list)
    ambiguous_set: list[Triplet] = field(default_factory=list)


@dataclass
class QaPair:
    """A generated question-answer probe with provenance."""

    id: str
    kind: str
    question: str
    answer: str
    timestep_id: str = ""
    provenance: tuple[str, ...] = ()
    subject: str = ""
    relation: str = ""
    object: str = ""
    persona: Optional[str] = None
    parent_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in QA_KINDS:
            raise ValueError(f"unknown qa kind {self.kind!r}")
        if not self.answer:
            raise ValueError("answer must be non-empty")

    def record(self) -> dict:
        """JSONL record with the frozen key order of the dataset schema."""
        return {
            "id": self.id,
            "kind": self.kind,
            "timestep": self.timestep_id,
            "question": self.question,
            "answer": self.answer,
            "subject": self.subject,
            "relation": self.relation,
            "object": self.object,
            "provenance": list(self.provenance),
            "persona": self.persona,
            "parent_id": self.parent_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "QaPair":
        return cls(
            id=rec["id"],
            kind=rec["kind"],
            question=rec["question"],
            answer=rec["answer"],
            timestep_id=rec.get("timestep", ""),
            provenance=tuple(rec.get("provenance", ())),
            subject=rec.get("subject", ""),
            relation=rec.get("relation", ""),
            object=rec.get("object", ""),
            persona=rec.get("persona"),
            parent_id=rec.get("parent_id"),
        )
