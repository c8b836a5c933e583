"""Deterministic synthetic snapshot-pair fixture.

Builds a 200-entity universe with known claim counts, then derives a new
snapshot with planted modifications, additions, deletions, two-hop
chains, ambiguous keys, and one planted specimen family per filter
rule. All expectations (claim totals, per-rule removals, join counts)
are computed by independent bookkeeping here, not by the code under
test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

ADJECTIVES = [
    "Alder", "Birch", "Cedar", "Dighton", "Elmwood", "Fenwick", "Garnet",
    "Hazel", "Iris", "Juniper", "Kestrel", "Laurel", "Maple", "Nutmeg",
    "Oriole", "Pinecrest", "Quartz", "Rowan", "Spruce", "Tamarind", "Umber",
    "Velvet", "Willow", "Xanadu", "Yarrow", "Zephyr", "Amber", "Bristol",
    "Crimson", "Dorado",
]
NOUNS = [
    "Town", "Harbor", "Ridge", "Valley", "Museum", "College", "Station",
    "Bridge", "Garden", "Library", "Theater", "Market",
]

RELATIONS = [
    ("P11", "capital", "The capital city of the subject."),
    ("P12", "head of government", "The person leading the subject's government."),
    ("P13", "partner city", "A city officially partnered with the subject."),
    ("P14", "main charity", "The charity most associated with the subject."),
    ("P15", "anthem", "The anthem used by the subject."),
    ("P16", "official language", "The language officially used by the subject."),
    ("P17", "highest point", "The highest point within the subject."),
    ("P18", "chief editor", "The person editing the subject's publications."),
]

N_ENTITIES = 200
BASE_QID = 101

MODIFIED_SUBJECTS = list(range(0, 18))
ADDED_SUBJECTS = list(range(30, 42))
CHAIN_STARTS = list(range(60, 66))  # a -> a+60 -> a+120
DELETED_SUBJECTS = [190, 191, 192]
DIRTY_SUBJECTS = list(range(150, 166))
AMBIGUOUS_SUBJECTS = [170, 171]

# Extra entities referenced only by planted dirty triplets.
NON_ROMAN = [("Q901", "Алексей Иванов"), ("Q902", "北京大学")]
SINGLE_CHAR = [("Q903", "X"), ("Q904", "Ŷ")]
LONG_LABEL = [
    ("Q905", "Grand Duchy of the Western Marches"),
    ("Q906", "Very Long Name of Six Words"),
]
UNRESOLVED = ["Q907", "Q908"]

Row = tuple[str, str, str, str, str]  # sid, pid, kind, oid, raw


def qid(index: int) -> str:
    return f"Q{BASE_QID + index}"


def entity_label(index: int) -> str:
    if index >= len(ADJECTIVES) * len(NOUNS):
        raise ValueError("label pool exhausted")
    return f"{ADJECTIVES[index % len(ADJECTIVES)]} {NOUNS[index // len(ADJECTIVES)]}"


def claim_count(index: int) -> int:
    return 1 + (index % 3)


def base_object(subject: int, slot: int) -> int:
    target = (subject * 7 + slot * 13 + 3) % N_ENTITIES
    while target == subject:
        target = (target + 1) % N_ENTITIES
    return target


@dataclass
class SnapshotFixture:
    """The full planted universe plus independently derived expectations."""

    old_rows: list[Row] = field(default_factory=list)
    new_rows: list[Row] = field(default_factory=list)
    labels: dict[str, str] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    def write_tsv(self, directory: Path, which: str) -> Path:
        target = directory / which
        target.mkdir(parents=True, exist_ok=True)
        rows = self.old_rows if which == "old" else self.new_rows
        with (target / "triplets.tsv").open("w", encoding="utf-8") as handle:
            for sid, pid, kind, oid, raw in rows:
                if kind == "entity":
                    handle.write(f"{sid}\t{pid}\t{oid}\n")
                else:
                    handle.write(f"{sid}\t{pid}\t\t{kind}\t{raw}\n")
        with (target / "labels.jsonl").open("w", encoding="utf-8") as handle:
            for rid in sorted(set(self.labels) | set(self.descriptions)):
                record: dict = {"id": rid}
                if rid in self.labels:
                    record["label"] = self.labels[rid]
                if rid in self.descriptions:
                    record["description"] = self.descriptions[rid]
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        return target

    def write_dump(self, path: Path, which: str) -> Path:
        """Entity-document JSONL form of the same snapshot."""
        rows = self.old_rows if which == "old" else self.new_rows
        claims_by_subject: dict[str, list[Row]] = {}
        for row in rows:
            claims_by_subject.setdefault(row[0], []).append(row)
        with path.open("w", encoding="utf-8") as handle:
            for pid, label, description in RELATIONS:
                handle.write(
                    json.dumps(
                        {
                            "id": pid,
                            "type": "property",
                            "labels": {"en": {"language": "en", "value": label}},
                            "descriptions": {"en": {"language": "en", "value": description}},
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            subjects = sorted(claims_by_subject)
            labeled_only = sorted(
                eid
                for eid in self.labels
                if eid not in claims_by_subject and not eid.startswith("P")
            )
            for eid in subjects + labeled_only:
                doc: dict = {"id": eid, "type": "item", "claims": {}}
                if eid in self.labels:
                    doc["labels"] = {"en": {"language": "en", "value": self.labels[eid]}}
                for sid, pid, kind, oid, raw in claims_by_subject.get(eid, []):
                    snak: dict
                    if kind == "entity":
                        snak = {
                            "snaktype": "value",
                            "property": pid,
                            "datavalue": {
                                "type": "wikibase-entityid",
                                "value": {"entity-type": "item", "id": oid},
                            },
                        }
                    elif kind == "quantity":
                        snak = {
                            "snaktype": "value",
                            "property": pid,
                            "datavalue": {"type": "quantity", "value": {"amount": raw}},
                        }
                    elif kind == "time":
                        snak = {
                            "snaktype": "value",
                            "property": pid,
                            "datavalue": {"type": "time", "value": {"time": raw}},
                        }
                    else:
                        snak = {
                            "snaktype": "value",
                            "property": pid,
                            "datavalue": {"type": "string", "value": raw},
                        }
                    doc["claims"].setdefault(pid, []).append({"mainsnak": snak})
                handle.write(json.dumps(doc, ensure_ascii=False) + "\n")
        return path


def build_fixture() -> SnapshotFixture:
    fx = SnapshotFixture()
    for pid, label, description in RELATIONS:
        fx.labels[pid] = label
        fx.descriptions[pid] = description
    for i in range(N_ENTITIES):
        fx.labels[qid(i)] = entity_label(i)
    for eid, label in NON_ROMAN + SINGLE_CHAR + LONG_LABEL:
        fx.labels[eid] = label
    # UNRESOLVED ids deliberately get no label entry

    old_keys: set[tuple[str, str]] = set()
    for i in range(N_ENTITIES):
        for j in range(claim_count(i)):
            pid = RELATIONS[(i + j) % len(RELATIONS)][0]
            row: Row = (qid(i), pid, "entity", qid(base_object(i, j)), "")
            fx.old_rows.append(row)
            old_keys.add((row[0], row[1]))

    # -- derive the new snapshot ---------------------------------------
    new_rows: list[Row] = []
    modified_keys = {
        (qid(i), RELATIONS[i % len(RELATIONS)][0]) for i in MODIFIED_SUBJECTS
    }
    deleted_subjects = {qid(i) for i in DELETED_SUBJECTS}
    clean_changed: list[Row] = []

    for sid, pid, kind, oid, raw in fx.old_rows:
        if sid in deleted_subjects:
            continue
        if (sid, pid) in modified_keys:
            subject_index = int(sid[1:]) - BASE_QID
            old_index = int(oid[1:]) - BASE_QID
            new_index = (old_index + 11) % N_ENTITIES
            while new_index in (subject_index, old_index):
                new_index = (new_index + 1) % N_ENTITIES
            row = (sid, pid, "entity", qid(new_index), "")
            new_rows.append(row)
            clean_changed.append(row)
        else:
            new_rows.append((sid, pid, kind, oid, raw))

    def add_new_key(subject: int | str, rel_offset: int, obj: str, kind: str = "entity", raw: str = "") -> Row:
        sid = subject if isinstance(subject, str) else qid(subject)
        for probe in range(len(RELATIONS)):
            pid = RELATIONS[(rel_offset + probe) % len(RELATIONS)][0]
            if (sid, pid) not in used_keys:
                used_keys.add((sid, pid))
                row = (sid, pid, kind, obj if kind == "entity" else "", raw)
                new_rows.append(row)
                return row
        raise AssertionError("no free relation slot")

    used_keys = set(old_keys)
    for i in ADDED_SUBJECTS:
        row = add_new_key(i, i + 5, qid((i * 3 + 50) % N_ENTITIES))
        clean_changed.append(row)
    for a in CHAIN_STARTS:
        b, c = a + 60, a + 120
        first = add_new_key(a, a + 6, qid(b))
        second = add_new_key(b, b + 7, qid(c))
        clean_changed.extend([first, second])

    dirty = iter(DIRTY_SUBJECTS)
    planted_removals = {
        "circular": 0, "non_roman": 0, "single_char": 0,
        "long_phrase": 0, "non_entity": 0, "unresolved": 0, "ambiguous_key": 0,
    }
    for _ in range(2):  # circular: subject is its own object
        i = next(dirty)
        add_new_key(i, i + 4, qid(i))
        planted_removals["circular"] += 1
    for eid, _label in NON_ROMAN:  # non-Roman subject labels
        add_new_key(eid, 0, qid(int(next(dirty))))
        planted_removals["non_roman"] += 1
    for eid, _label in SINGLE_CHAR:  # one-character object labels
        add_new_key(next(dirty), 2, eid)
        planted_removals["single_char"] += 1
    for eid, _label in LONG_LABEL:  # > five-word object labels
        add_new_key(next(dirty), 3, eid)
        planted_removals["long_phrase"] += 1
    add_new_key(next(dirty), 1, "", kind="quantity", raw="42.5")
    add_new_key(next(dirty), 1, "", kind="time", raw="+2024-05-01T00:00:00Z")
    add_new_key(next(dirty), 1, "", kind="string", raw="hello world")
    planted_removals["non_entity"] += 3
    for eid in UNRESOLVED:  # object entity lacking a label
        add_new_key(next(dirty), 5, eid)
        planted_removals["unresolved"] += 1
    for i in AMBIGUOUS_SUBJECTS:  # one key, two objects
        sid = qid(i)
        for probe in range(len(RELATIONS)):
            pid = RELATIONS[(i + 4 + probe) % len(RELATIONS)][0]
            if (sid, pid) not in used_keys:
                used_keys.add((sid, pid))
                new_rows.append((sid, pid, "entity", qid((i + 9) % N_ENTITIES), ""))
                new_rows.append((sid, pid, "entity", qid((i + 19) % N_ENTITIES), ""))
                planted_removals["ambiguous_key"] += 2
                break

    fx.new_rows = new_rows

    # -- expectations (independent bookkeeping) ------------------------
    old_claims = len(fx.old_rows)
    deleted_claims = sum(claim_count(i) for i in DELETED_SUBJECTS)
    n_modified = len(MODIFIED_SUBJECTS)
    n_static = old_claims - deleted_claims - n_modified
    kept_changed = clean_changed

    # brute-force ordered join over the surviving changed triplets
    joins = 0
    for s1, p1, k1, o1, _ in kept_changed:
        for s2, p2, k2, o2, _ in kept_changed:
            if (s1, p1, o1) == (s2, p2, o2):
                continue
            if o1 == s2 and o2 != s1:
                joins += 1

    # every changed item must have a static candidate with distinct object
    static_objects = {
        oid
        for sid, pid, kind, oid, raw in fx.old_rows
        if sid not in deleted_subjects and (sid, pid) not in modified_keys
    }
    for row in kept_changed:
        assert any(obj != row[3] for obj in static_objects), "no locality candidate"

    n_kept = len(kept_changed)
    fx.expected = {
        "old_claims": old_claims,
        "old_entities": N_ENTITIES,
        "new_claims": len(new_rows),
        "n_static": n_static,
        "n_changed_clean": n_kept,
        "n_modified": n_modified,
        "n_ambiguous_rows": planted_removals["ambiguous_key"],
        "removals": planted_removals,
        "dataset_counts": {
            "update": n_kept,
            "locality": n_kept,
            "rephrase": n_kept,
            "persona": n_kept,
            "mhop": joins,
        },
    }
    return fx
