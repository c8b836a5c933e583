"""Snapshot diffing: partition the facts of the newer snapshot into
unchanged, changed (new or modified), and ambiguous-key sets.

Keys seen with more than one distinct object in either snapshot are not
diffed per object; they land in the ambiguous set and are removed by the
nondeterminism filter downstream. Keys present only in the old snapshot
are dropped: deletions are not edits. Large store pairs fall back to an
external sorted-merge so memory stays bounded by the run chunk size.
"""

from __future__ import annotations

import hashlib
import heapq
import tempfile
from pathlib import Path
from typing import Iterator, Optional

from editforge.models import (
    ChangedTriplet,
    DiffResult,
    Row,
    TripletStore,
    _escape_field,
    _unescape_field,
)

DEFAULT_IN_MEMORY_THRESHOLD = 2_000_000


def row_object_key(row: Row) -> str:
    """Object identity key computed straight from a compact row."""
    _, _, kind, oid, raw = row
    if kind == "entity":
        return oid
    digest = hashlib.sha1(f"{kind}:{raw}".encode("utf-8")).hexdigest()
    return f"lit-{digest[:12]}"


def _classify_key(
    result: DiffResult,
    new_rows: dict[str, Row],
    old_rows: Optional[dict[str, Row]],
    new_store: TripletStore,
    old_store: TripletStore,
) -> None:
    objs_new = set(new_rows)
    objs_old = set(old_rows) if old_rows else set()
    if old_rows is not None and objs_new == objs_old:
        for okey in sorted(objs_new):
            result.static_set.append(new_store.materialize(new_rows[okey]))
        return
    if len(objs_new) > 1 or len(objs_old) > 1:
        for okey in sorted(objs_new):
            result.ambiguous_set.append(new_store.materialize(new_rows[okey]))
        return
    (okey,) = objs_new
    triplet = new_store.materialize(new_rows[okey])
    if not objs_old:
        result.changed_set.append(ChangedTriplet(triplet, "new"))
    else:
        (old_okey,) = objs_old
        assert old_rows is not None
        old_object = old_store.materialize(old_rows[old_okey]).object
        result.changed_set.append(
            ChangedTriplet(triplet, "modified", old_object)
        )


def _sort_result(result: DiffResult) -> DiffResult:
    result.static_set.sort(key=lambda t: t.uid)
    result.changed_set.sort(key=lambda c: c.uid)
    result.ambiguous_set.sort(key=lambda t: t.uid)
    return result


def _diff_in_memory(old: TripletStore, new: TripletStore) -> DiffResult:
    old_map: dict[tuple[str, str], dict[str, Row]] = {}
    for row in old.iter_rows():
        old_map.setdefault((row[0], row[1]), {})[row_object_key(row)] = row
    new_map: dict[tuple[str, str], dict[str, Row]] = {}
    for row in new.iter_rows():
        new_map.setdefault((row[0], row[1]), {})[row_object_key(row)] = row
    result = DiffResult()
    for key, new_rows in new_map.items():
        _classify_key(result, new_rows, old_map.get(key), new, old)
    return _sort_result(result)


# -- external sorted-merge path ---------------------------------------


def _write_sorted_runs(store: TripletStore, run_dir: Path, chunk_size: int) -> list[Path]:
    runs: list[Path] = []
    chunk: list[Row] = []

    def flush() -> None:
        if not chunk:
            return
        chunk.sort(key=lambda r: (r[0], r[1], row_object_key(r)))
        path = run_dir / f"run-{len(runs):05d}.tsv"
        with path.open("w", encoding="utf-8") as handle:
            for row in chunk:
                handle.write("\t".join(_escape_field(f) for f in row) + "\n")
        runs.append(path)
        chunk.clear()

    for row in store.iter_rows():
        chunk.append(row)
        if len(chunk) >= chunk_size:
            flush()
    flush()
    return runs


def _iter_run(path: Path) -> Iterator[Row]:
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            parts = line.rstrip("\n").split("\t")
            yield tuple(_unescape_field(p) for p in parts)  # type: ignore[misc]


def _iter_key_groups(
    runs: list[Path],
) -> Iterator[tuple[tuple[str, str], dict[str, Row]]]:
    merged = heapq.merge(
        *(_iter_run(p) for p in runs),
        key=lambda r: (r[0], r[1], row_object_key(r)),
    )
    current_key: Optional[tuple[str, str]] = None
    group: dict[str, Row] = {}
    for row in merged:
        key = (row[0], row[1])
        if key != current_key:
            if current_key is not None:
                yield current_key, group
            current_key, group = key, {}
        group[row_object_key(row)] = row
    if current_key is not None:
        yield current_key, group


def _diff_external(
    old: TripletStore, new: TripletStore, chunk_size: int
) -> DiffResult:
    result = DiffResult()
    with tempfile.TemporaryDirectory(prefix="editforge-diff-") as tmp:
        tmp_path = Path(tmp)
        old_dir = tmp_path / "old"
        new_dir = tmp_path / "new"
        old_dir.mkdir()
        new_dir.mkdir()
        old_groups = _iter_key_groups(_write_sorted_runs(old, old_dir, chunk_size))
        new_groups = _iter_key_groups(_write_sorted_runs(new, new_dir, chunk_size))
        old_item = next(old_groups, None)
        new_item = next(new_groups, None)
        while new_item is not None:
            if old_item is None or old_item[0] > new_item[0]:
                _classify_key(result, new_item[1], None, new, old)
                new_item = next(new_groups, None)
            elif old_item[0] < new_item[0]:
                old_item = next(old_groups, None)  # old-only key: dropped
            else:
                _classify_key(result, new_item[1], old_item[1], new, old)
                old_item = next(old_groups, None)
                new_item = next(new_groups, None)
    return _sort_result(result)


def diff_snapshots(
    old: TripletStore,
    new: TripletStore,
    in_memory_threshold: Optional[int] = DEFAULT_IN_MEMORY_THRESHOLD,
    chunk_size: int = 100_000,
) -> DiffResult:
    """Diff two label-resolved stores into static/changed/ambiguous sets.

    Output lists are sorted by triplet uid, so the result is independent
    of row order in the inputs and of the merge path taken.
    """
    total = len(old) + len(new)
    if in_memory_threshold is not None and total > in_memory_threshold:
        return _diff_external(old, new, chunk_size)
    return _diff_in_memory(old, new)
