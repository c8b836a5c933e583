"""Retrieval-augmented baseline: an append-only memory of
(question, answer, embedding) tuples with top-k cosine retrieval and
augmented-context construction.

Exact scan is the default and the correctness reference; the
approximate small-world index is opt-in for large memories and is held
to a configured recall floor. Retrieval ties break on insertion order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from threading import Lock
from typing import Optional, Sequence, Union

import numpy as np

from editforge.ann import SmallWorldIndex
from editforge.embedding import EmbeddingError, EmbeddingProvider
from editforge.models import QaPair
from editforge.providers import ModelProvider

NORM_TOLERANCE = 1e-6


class RagConfigError(Exception):
    """Fatal memory configuration problem (e.g. dimension mismatch)."""


@dataclass(frozen=True)
class MemoryEntry:
    id: str
    question: str
    answer: str
    embedding: np.ndarray  # unit-norm, float32


@dataclass
class AugmentedContext:
    text: str
    retrieved_ids: list[str]
    query: str


class RagMemory:
    """Append-only QA memory. Reads operate on an immutable snapshot of
    (entries, matrix, count); writers append under a lock, so a reader
    never observes a partially added batch."""

    def __init__(
        self,
        dim: int,
        mode: str = "exact",
        recall_floor: float = 0.95,
        ann_seed: int = 0,
    ) -> None:
        if mode not in ("exact", "approx"):
            raise RagConfigError(f"unknown retrieval mode {mode!r}")
        self.dim = dim
        self.mode = mode
        self.recall_floor = recall_floor
        self.entries: list[MemoryEntry] = []
        self.add_errors = 0
        self._matrix = np.zeros((0, dim), dtype=np.float32)
        self._count = 0
        self._lock = Lock()
        self._ann: Optional[SmallWorldIndex] = (
            SmallWorldIndex(dim=dim, seed=ann_seed) if mode == "approx" else None
        )
        self._frozen = False

    def __len__(self) -> int:
        return self._count

    def _grow(self, extra: int) -> None:
        needed = self._count + extra
        if needed <= self._matrix.shape[0]:
            return
        capacity = max(needed, 2 * self._matrix.shape[0], 256)
        grown = np.zeros((capacity, self.dim), dtype=np.float32)
        grown[: self._count] = self._matrix[: self._count]
        self._matrix = grown

    def append(
        self,
        entry_id: str,
        question: str,
        answer: str,
        vector: np.ndarray,
        prenormalized: bool = False,
    ) -> None:
        if self._frozen:
            raise RagConfigError("cannot append to a snapshot view")
        if vector.shape != (self.dim,):
            raise RagConfigError(
                f"embedding dimension {vector.shape} does not match memory dim {self.dim}"
            )
        if prenormalized:
            # bit-exact path used on reload, so retrieval is reproduced
            unit = np.asarray(vector, dtype=np.float32)
        else:
            vector = np.asarray(vector, dtype=np.float64)
            norm = float(np.linalg.norm(vector))
            if norm == 0.0:
                raise RagConfigError("zero-norm embedding")
            unit = (vector / norm).astype(np.float32)
        with self._lock:
            self._grow(1)
            self._matrix[self._count] = unit
            entry = MemoryEntry(
                id=entry_id, question=question, answer=answer, embedding=unit
            )
            self.entries.append(entry)
            if self._ann is not None:
                self._ann.add(unit.astype(np.float64))
            self._count += 1

    def snapshot(self) -> "RagMemory":
        """Read-only view pinned at the current size. Snapshot retrieval
        is always exact-scan, regardless of the parent's mode."""
        view = RagMemory(dim=self.dim, mode="exact", recall_floor=self.recall_floor)
        with self._lock:
            view.entries = self.entries  # append-only: indices < count are stable
            view._matrix = self._matrix
            view._count = self._count
        view._frozen = True
        return view


def add_entries(
    memory: RagMemory,
    batch: Sequence[QaPair],
    embedder: EmbeddingProvider,
) -> RagMemory:
    """Embed and append one update batch. Append-only: duplicates grow
    the memory. Per-item embedding failures are retried once, then
    skipped and counted on `memory.add_errors`."""
    if getattr(embedder, "dim", memory.dim) != memory.dim:
        raise RagConfigError(
            f"embedder dim {getattr(embedder, 'dim', '?')} != memory dim {memory.dim}"
        )
    batch = list(batch)
    if not batch:
        return memory
    texts = [pair.question for pair in batch]
    try:
        vectors = embedder.embed(texts)
    except EmbeddingError:
        vectors = np.zeros((len(texts), memory.dim))
        for i, text in enumerate(texts):
            try:
                vectors[i] = embedder.embed([text])[0]
            except EmbeddingError:
                vectors[i] = np.nan
    for pair, vector in zip(batch, vectors):
        if np.any(np.isnan(vector)):
            memory.add_errors += 1
            continue
        memory.append(pair.id, pair.question, pair.answer, vector)
    return memory


def retrieve(
    memory: RagMemory,
    query: str,
    k: int,
    embedder: EmbeddingProvider,
) -> list[tuple[MemoryEntry, float]]:
    """Top-k entries by cosine similarity, best first. Exact mode returns
    the true top-k with ties broken by insertion order; k beyond the
    memory size returns everything."""
    if k < 1 or len(memory) == 0:
        return []
    query_vec = embedder.embed([query])[0]
    count = len(memory)
    k = min(k, count)
    if memory.mode == "approx" and memory._ann is not None:
        found = memory._ann.search(np.asarray(query_vec, dtype=np.float64), k)
        return [(memory.entries[idx], float(sim)) for idx, sim in found]
    sims = memory._matrix[:count] @ query_vec.astype(np.float32)
    order = np.lexsort((np.arange(count), -sims))[:k]
    return [(memory.entries[int(i)], float(sims[int(i)])) for i in order]


def build_context(
    query: str,
    retrieved: Sequence[tuple[MemoryEntry, float]],
    separator: str = "\n",
) -> AugmentedContext:
    """Render retrieved pairs in rank order, then the test question with
    an open answer slot."""
    blocks = [f"Q: {entry.question}{separator}A: {entry.answer}" for entry, _ in retrieved]
    blocks.append(f"Q: {query}{separator}A:")
    return AugmentedContext(
        text=separator.join(blocks),
        retrieved_ids=[entry.id for entry, _ in retrieved],
        query=query,
    )


def answer_with_rag(
    memory: RagMemory,
    model: ModelProvider,
    query: str,
    k: int,
    embedder: EmbeddingProvider,
) -> str:
    retrieved = retrieve(memory, query, k, embedder)
    context = build_context(query, retrieved)
    return model.answer(query, context=context.text)


class RagAnswerer:
    """ModelProvider adapter: answers every question through retrieval
    over a fixed memory snapshot."""

    def __init__(
        self,
        memory: RagMemory,
        model: ModelProvider,
        embedder: EmbeddingProvider,
        k: int = 2,
        name: Optional[str] = None,
    ) -> None:
        self.memory = memory
        self.model = model
        self.embedder = embedder
        self.k = k
        self.name = name or f"rag({getattr(model, 'name', 'model')})"

    def answer(self, question: str, context: Optional[str] = None) -> str:
        return answer_with_rag(self.memory, self.model, question, self.k, self.embedder)


# -- persistence --------------------------------------------------------


def save_memory(memory: RagMemory, directory: Union[str, Path]) -> None:
    """Write entries.jsonl, a raw little-endian float32 embedding matrix,
    and a header; reload reproduces identical exact-mode retrieval."""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    count = len(memory)
    with (target / "entries.jsonl").open("w", encoding="utf-8", newline="\n") as handle:
        for entry in memory.entries[:count]:
            handle.write(
                json.dumps(
                    {"id": entry.id, "question": entry.question, "answer": entry.answer},
                    ensure_ascii=False,
                )
                + "\n"
            )
    matrix = memory._matrix[:count].astype("<f4")
    matrix.tofile(target / "embeddings.f32")
    (target / "header.json").write_text(
        json.dumps({"dim": memory.dim, "count": count}) + "\n", encoding="utf-8"
    )


def load_memory(
    directory: Union[str, Path], mode: str = "exact", ann_seed: int = 0
) -> RagMemory:
    source = Path(directory)
    header = json.loads((source / "header.json").read_text(encoding="utf-8"))
    dim, count = int(header["dim"]), int(header["count"])
    matrix = np.fromfile(source / "embeddings.f32", dtype="<f4")
    if matrix.size != dim * count:
        raise RagConfigError(
            f"embedding file holds {matrix.size} floats, expected {dim * count}"
        )
    matrix = matrix.reshape(count, dim)
    memory = RagMemory(dim=dim, mode=mode, ann_seed=ann_seed)
    with (source / "entries.jsonl").open(encoding="utf-8") as handle:
        records = [json.loads(line) for line in handle if line.strip()]
    if len(records) != count:
        raise RagConfigError(f"{len(records)} entries != header count {count}")
    for record, vector in zip(records, matrix):
        memory.append(
            record["id"], record["question"], record["answer"], vector, prenormalized=True
        )
    return memory
