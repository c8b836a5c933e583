"""Streaming snapshot ingestion.

Two input forms are accepted:

* the line-delimited entity-document dump (one JSON document per line,
  optionally wrapped in ``[`` / ``]`` array markers with trailing commas,
  optionally gzip/bzip2 compressed), and
* the canonical TSV triplet file with a JSONL label sidecar, which is the
  desk-scale fixture and interchange format.

Parsing is strictly streaming: rows spill to a spool file past a
threshold so peak memory tracks the label table, not the dump size.
"""

from __future__ import annotations

import bz2
import gzip
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Optional, TextIO, Union

from editforge.models import ENTITY_ID_RE, TripletStore, _unescape_field

logger = logging.getLogger(__name__)


class IngestError(Exception):
    """Fatal ingest failure (unreadable stream or missing input)."""


@dataclass
class IngestConfig:
    label_lang: str = "en"
    format: str = "tsv"  # "tsv" | "dump"
    spool_threshold: Optional[int] = None
    spool_dir: Optional[str] = None


def _text_stream(reader: Union[BinaryIO, TextIO]) -> TextIO:
    if hasattr(reader, "encoding"):
        return reader  # type: ignore[return-value]
    return io.TextIOWrapper(reader, encoding="utf-8", errors="replace")


def _object_from_snak(snak: dict) -> Optional[tuple[str, str, str]]:
    """Map a claim's main snak to (kind, entity_id, raw); None if valueless."""
    if snak.get("snaktype") != "value":
        return None
    datavalue = snak.get("datavalue") or {}
    dtype = datavalue.get("type")
    value = datavalue.get("value")
    if dtype == "wikibase-entityid":
        if isinstance(value, dict):
            oid = value.get("id")
            if not oid and "numeric-id" in value:
                prefix = {"item": "Q", "property": "P"}.get(
                    value.get("entity-type", "item"), "Q"
                )
                oid = f"{prefix}{value['numeric-id']}"
            if oid and ENTITY_ID_RE.match(str(oid)):
                return ("entity", str(oid), "")
        return None
    if dtype == "quantity":
        amount = value.get("amount", "") if isinstance(value, dict) else str(value)
        return ("quantity", "", str(amount))
    if dtype == "time":
        stamp = value.get("time", "") if isinstance(value, dict) else str(value)
        return ("time", "", str(stamp))
    if dtype == "globecoordinate":
        if isinstance(value, dict):
            return ("coordinate", "", f"{value.get('latitude')},{value.get('longitude')}")
        return ("coordinate", "", str(value))
    if dtype == "string":
        return ("string", "", str(value))
    if dtype == "monolingualtext":
        text = value.get("text", "") if isinstance(value, dict) else str(value)
        return ("string", "", text)
    if dtype is None:
        return None
    return ("other", "", json.dumps(value, sort_keys=True, ensure_ascii=False))


def _lang_value(table: dict, lang: str) -> str:
    entry = table.get(lang)
    if isinstance(entry, dict):
        return str(entry.get("value", ""))
    return ""


def parse_snapshot(
    reader: Union[BinaryIO, TextIO], config: Optional[IngestConfig] = None
) -> TripletStore:
    """Stream-parse a line-delimited entity-document dump into a store.

    Every claim with a resolvable property and an entity-or-literal value
    becomes one triplet. Malformed records increment a skip counter and
    never abort the stream.
    """
    config = config or IngestConfig()
    store = TripletStore(
        spool_threshold=config.spool_threshold, spool_dir=config.spool_dir
    )
    try:
        lines = _text_stream(reader)
        entity_count = 0
        for line in lines:
            line = line.strip()
            if not line or line in ("[", "]"):
                continue
            if line.endswith(","):
                line = line[:-1]
            try:
                doc = json.loads(line)
            except (json.JSONDecodeError, UnicodeDecodeError):
                store.skipped_records += 1
                continue
            if not isinstance(doc, dict):
                store.skipped_records += 1
                continue
            doc_id = doc.get("id", "")
            if not isinstance(doc_id, str) or not ENTITY_ID_RE.match(doc_id):
                store.skipped_records += 1
                continue
            label = _lang_value(doc.get("labels") or {}, config.label_lang)
            if label:
                store.labels[doc_id] = label
            if doc.get("type") == "property" or doc_id.startswith("P"):
                desc = _lang_value(doc.get("descriptions") or {}, config.label_lang)
                if desc:
                    store.descriptions[doc_id] = desc
                continue  # property docs carry no fact claims for us
            entity_count += 1
            claims = doc.get("claims")
            if claims is None:
                continue
            if not isinstance(claims, dict):
                store.skipped_records += 1
                continue
            for prop_id, statements in claims.items():
                if not ENTITY_ID_RE.match(str(prop_id)) or not isinstance(
                    statements, list
                ):
                    store.skipped_claims += 1
                    continue
                for statement in statements:
                    snak = (
                        statement.get("mainsnak")
                        if isinstance(statement, dict)
                        else None
                    )
                    if not isinstance(snak, dict):
                        store.skipped_claims += 1
                        continue
                    obj = _object_from_snak(snak)
                    if obj is None:
                        store.skipped_claims += 1
                        continue
                    kind, oid, raw = obj
                    store.add_row((doc_id, str(prop_id), kind, oid, raw))
    except OSError as exc:
        raise IngestError(f"unreadable snapshot stream: {exc}") from exc
    store.finish()
    store.meta.entity_count = entity_count
    if store.skipped_records:
        logger.warning("skipped %d malformed records", store.skipped_records)
    return store


def parse_tsv_snapshot(
    triplet_path: Union[str, Path],
    labels_path: Optional[Union[str, Path]] = None,
    config: Optional[IngestConfig] = None,
) -> TripletStore:
    """Parse the canonical TSV form: ``subject<TAB>relation<TAB>object`` per
    line (empty object column plus kind/raw columns for literals) with a
    JSONL label sidecar of ``{"id", "label", "description"?}`` records."""
    config = config or IngestConfig()
    triplet_path = Path(triplet_path)
    if labels_path is None:
        labels_path = triplet_path.with_name("labels.jsonl")
    store = TripletStore(
        spool_threshold=config.spool_threshold, spool_dir=config.spool_dir
    )
    labels_file = Path(labels_path)
    if labels_file.exists():
        with labels_file.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    store.skipped_records += 1
                    continue
                rid = rec.get("id")
                if not rid:
                    store.skipped_records += 1
                    continue
                if rec.get("label"):
                    store.labels[rid] = rec["label"]
                if rec.get("description"):
                    store.descriptions[rid] = rec["description"]
    subjects = set()
    try:
        with triplet_path.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) == 3 and all(parts):
                    sid, pid, oid = parts
                    if not (ENTITY_ID_RE.match(sid) and ENTITY_ID_RE.match(pid)):
                        store.skipped_records += 1
                        continue
                    subjects.add(sid)
                    store.add_row((sid, pid, "entity", oid, ""))
                elif len(parts) == 5 and parts[0] and parts[1] and not parts[2]:
                    sid, pid, _, kind, raw = parts
                    subjects.add(sid)
                    store.add_row((sid, pid, kind, "", _unescape_field(raw)))
                else:
                    store.skipped_records += 1
    except OSError as exc:
        raise IngestError(f"unreadable triplet file {triplet_path}: {exc}") from exc
    store.finish()
    store.meta.entity_count = len(subjects)
    store.meta.source_uri = str(triplet_path)
    return store


def open_maybe_compressed(path: Union[str, Path]) -> BinaryIO:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")  # type: ignore[return-value]
    if path.suffix == ".bz2":
        return bz2.open(path, "rb")  # type: ignore[return-value]
    return path.open("rb")


def load_snapshot(
    path: Union[str, Path], config: Optional[IngestConfig] = None
) -> TripletStore:
    """Dispatch on the configured format and parse a snapshot from disk."""
    config = config or IngestConfig()
    path = Path(path)
    if not path.exists():
        raise IngestError(f"snapshot input not found: {path}")
    if config.format == "dump":
        with open_maybe_compressed(path) as reader:
            store = parse_snapshot(reader, config)
    elif config.format == "tsv":
        target = path / "triplets.tsv" if path.is_dir() else path
        store = parse_tsv_snapshot(target, config=config)
    else:
        raise IngestError(f"unknown ingest format {config.format!r}")
    store.meta.source_uri = str(path)
    return store


def resolve_labels(store: TripletStore) -> TripletStore:
    """Apply the store's label table and flag triplets lacking labels."""
    store.resolve()
    if store.unresolved_count:
        logger.warning("%d triplets have unresolved labels", store.unresolved_count)
    return store
