"""Timestep dataset persistence: one JSONL file per QA kind plus a
hash-carrying manifest, with referential-integrity checks on load.

File bytes are fully deterministic for a given batch: records use the
frozen key order of the dataset schema, UTF-8, LF line endings.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional, Union

from editforge.artifacts import atomic_write
from editforge.models import QaPair

logger = logging.getLogger(__name__)

KIND_ORDER = ("update", "locality", "rephrase", "persona", "mhop")


class StoreError(Exception):
    pass


class IntegrityError(StoreError):
    """Content hash mismatch: the dataset files were altered."""


class SchemaError(StoreError):
    """Referential integrity violation; lists the offending ids."""


@dataclass
class UpdateBatch:
    timestep_id: str
    date_range: tuple[str, str] = ("", "")
    sets: dict[str, list[QaPair]] = field(default_factory=dict)

    @property
    def counts(self) -> dict[str, int]:
        return {kind: len(self.sets.get(kind, [])) for kind in KIND_ORDER}

    def all_pairs(self) -> list[QaPair]:
        return [pair for kind in KIND_ORDER for pair in self.sets.get(kind, [])]

    def validate(self) -> None:
        """Enforce batch invariants; raises SchemaError naming offenders."""
        offenders: list[str] = []
        for start_or_end in self.date_range:
            if start_or_end:
                try:
                    date.fromisoformat(start_or_end)
                except ValueError:
                    offenders.append(f"bad date {start_or_end!r}")
        seen_ids: set[str] = set()
        for pair in self.all_pairs():
            if pair.id in seen_ids:
                offenders.append(f"duplicate id {pair.id}")
            seen_ids.add(pair.id)
        update_ids = {pair.id for pair in self.sets.get("update", [])}
        update_provenance = {
            uid for pair in self.sets.get("update", []) for uid in pair.provenance
        }
        for kind in ("rephrase", "persona"):
            for pair in self.sets.get(kind, []):
                if pair.parent_id is None or pair.parent_id not in update_ids:
                    offenders.append(f"dangling parent_id {pair.parent_id!r} on {pair.id}")
        for pair in self.sets.get("mhop", []):
            if len(pair.provenance) != 2:
                offenders.append(f"mhop {pair.id} needs two provenance ids")
                continue
            for uid in pair.provenance:
                if uid not in update_provenance:
                    offenders.append(f"mhop {pair.id} provenance {uid} not in update set")
        if offenders:
            raise SchemaError("; ".join(offenders))


def _batch_files_digest(paths: list[Path]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        digest.update(path.read_bytes())
    return digest.hexdigest()


def emit_timestep(batch: UpdateBatch, out_dir: Union[str, Path]) -> dict:
    """Write one timestep dataset directory and return its manifest entry."""
    batch.validate()
    target = Path(out_dir) / batch.timestep_id
    try:
        target.mkdir(parents=True, exist_ok=True)
        files: dict[str, str] = {}
        paths: list[Path] = []
        for kind in KIND_ORDER:
            path = target / f"{kind}.jsonl"
            pairs = sorted(batch.sets.get(kind, []), key=lambda p: p.id)
            with atomic_write(path) as handle:
                for pair in pairs:
                    handle.write(json.dumps(pair.record(), ensure_ascii=False) + "\n")
            files[kind] = path.name
            paths.append(path)
        entry = {
            "timestep_id": batch.timestep_id,
            "date_range": list(batch.date_range),
            "counts": batch.counts,
            "files": files,
            "sha256": _batch_files_digest(paths),
        }
        with atomic_write(target / "manifest.json") as handle:
            handle.write(
                json.dumps(entry, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
            )
    except OSError as exc:
        raise StoreError(f"cannot write timestep to {target}: {exc}") from exc
    return entry


def load_timestep(path: Union[str, Path]) -> UpdateBatch:
    """Load and verify one timestep directory (hash, then invariants)."""
    target = Path(path)
    manifest_path = target / "manifest.json"
    if not manifest_path.exists():
        raise StoreError(f"no manifest at {manifest_path}")
    entry = json.loads(manifest_path.read_text(encoding="utf-8"))
    paths = [target / entry["files"][kind] for kind in KIND_ORDER]
    digest = _batch_files_digest(paths)
    if digest != entry["sha256"]:
        raise IntegrityError(
            f"content hash mismatch for {entry['timestep_id']}: "
            f"expected {entry['sha256']}, got {digest}"
        )
    sets: dict[str, list[QaPair]] = {}
    for kind, path in zip(KIND_ORDER, paths):
        pairs = []
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    pairs.append(QaPair.from_record(json.loads(line)))
        sets[kind] = pairs
    batch = UpdateBatch(
        timestep_id=entry["timestep_id"],
        date_range=tuple(entry["date_range"]),  # type: ignore[arg-type]
        sets=sets,
    )
    for kind in KIND_ORDER:
        if len(sets[kind]) != entry["counts"][kind]:
            raise SchemaError(
                f"{kind} count {len(sets[kind])} != manifest {entry['counts'][kind]}"
            )
    batch.validate()
    return batch


class BenchmarkManifest:
    """Ordered list of timestep descriptors for a dataset directory."""

    def __init__(self, entries: Optional[list[dict]] = None) -> None:
        self.entries = entries or []

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BenchmarkManifest":
        path = Path(path)
        if not path.exists():
            return cls()
        data = json.loads(path.read_text(encoding="utf-8"))
        return cls(entries=data.get("timesteps", []))

    def append(self, entry: dict) -> None:
        if self.entries:
            previous = self.entries[-1]
            prev_end = previous["date_range"][1]
            new_start = entry["date_range"][0]
            if prev_end and new_start and new_start < prev_end:
                logger.warning(
                    "timestep %s starts (%s) before previous end (%s)",
                    entry["timestep_id"],
                    new_start,
                    prev_end,
                )
        self.entries = [
            e for e in self.entries if e["timestep_id"] != entry["timestep_id"]
        ]
        self.entries.append(entry)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            json.dumps(
                {"timesteps": self.entries}, ensure_ascii=False, indent=2, sort_keys=True
            )
            + "\n",
            encoding="utf-8",
        )
