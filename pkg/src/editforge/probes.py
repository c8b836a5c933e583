"""Locality probes and two-hop reasoning tuples.

Locality: each changed fact is paired with the most semantically similar
static fact (cosine over embeddings of "subject label + relation label")
whose object is distinct, probing that edits do not spill over.

Multi-hop: ordered pairs of changed facts chained through a bridge
entity (first object = second subject), probing reasoning across edits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from editforge.ann import SmallWorldIndex
from editforge.embedding import EmbeddingError, EmbeddingProvider
from editforge.models import ChangedTriplet, EntityRef, PropertyRef, Triplet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalityProbe:
    changed_id: str  # uid of the changed triplet this probe guards
    probe: Triplet  # member of the static set
    similarity: float


@dataclass(frozen=True)
class MhopQuintuple:
    e0: EntityRef
    r1: PropertyRef
    e1: EntityRef  # bridge entity, masked in prompts
    r2: PropertyRef
    e2: EntityRef
    first_id: str
    second_id: str


def pairing_text(t: Triplet) -> str:
    """Text embedded for locality pairing."""
    return f"{t.subject.label} {t.relation.label}"


def _objects_differ(changed: Triplet, candidate: Triplet) -> bool:
    if changed.object.key == candidate.object.key:
        return False
    c_label = changed.object.label.casefold()
    p_label = candidate.object.label.casefold()
    return c_label != p_label


def _embed_chunked(
    embedder: EmbeddingProvider, texts: Sequence[str], batch_size: int
) -> np.ndarray:
    chunks = []
    for start in range(0, len(texts), batch_size):
        chunks.append(embedder.embed(texts[start : start + batch_size]))
    if not chunks:
        return np.zeros((0, getattr(embedder, "dim", 0)))
    return np.vstack(chunks)


def build_locality_probes(
    changed: Sequence[ChangedTriplet],
    static: Sequence[Triplet],
    embedder: EmbeddingProvider,
    batch_size: int = 128,
    use_ann: bool = False,
    ann_seed: int = 0,
) -> list[LocalityProbe]:
    """Pick, per changed triplet, the nearest static triplet with a
    distinct object. Changed items with no admissible candidate yield no
    probe; the caller can recover the count as len(changed) - len(result).

    Exact scan is the default. With `use_ann` a small-world index
    shortlists candidates, falling back to the exact scan whenever the
    shortlist has no admissible entry.
    """
    static = list(static)
    changed = list(changed)
    if not static or not changed:
        return []
    try:
        static_vecs = _embed_chunked(
            embedder, [pairing_text(t) for t in static], batch_size
        )
        changed_vecs = _embed_chunked(
            embedder, [pairing_text(c.triplet) for c in changed], batch_size
        )
    except EmbeddingError as exc:
        logger.error("embedding failed, no locality probes built: %s", exc)
        return []

    index: Optional[SmallWorldIndex] = None
    if use_ann:
        index = SmallWorldIndex(dim=static_vecs.shape[1], seed=ann_seed)
        index.add_batch(static_vecs)

    probes: list[LocalityProbe] = []
    for i, item in enumerate(changed):
        query = changed_vecs[i]
        chosen: Optional[int] = None
        chosen_sim = 0.0
        if index is not None:
            shortlist = index.search(query, k=min(32, len(static)))
            for cand, sim in shortlist:
                if _objects_differ(item.triplet, static[cand]):
                    chosen, chosen_sim = cand, float(sim)
                    break
        if chosen is None:
            sims = static_vecs @ query
            for cand in np.argsort(-sims, kind="stable"):
                if _objects_differ(item.triplet, static[int(cand)]):
                    chosen, chosen_sim = int(cand), float(sims[cand])
                    break
        if chosen is None:
            continue  # every candidate shares the changed object
        probes.append(
            LocalityProbe(
                changed_id=item.uid, probe=static[chosen], similarity=chosen_sim
            )
        )
    return probes


def build_mhop_tuples(changed: Sequence[ChangedTriplet]) -> list[MhopQuintuple]:
    """All ordered pairs of changed facts where the first object entity
    is the second subject, excluding self-joins and self-bridging pairs
    (same start and end entity). Output sorted by provenance ids."""
    changed = list(changed)
    by_subject: dict[str, list[int]] = {}
    for j, item in enumerate(changed):
        by_subject.setdefault(item.triplet.subject.id, []).append(j)
    tuples: list[MhopQuintuple] = []
    for i, first in enumerate(changed):
        obj = first.triplet.object
        if not obj.is_entity:
            continue
        assert obj.entity is not None
        for j in by_subject.get(obj.entity.id, ()):
            if i == j:
                continue
            second = changed[j].triplet
            if not second.object.is_entity:
                continue
            assert second.object.entity is not None
            if second.object.entity.id == first.triplet.subject.id:
                continue  # e0 == e2: no information gain
            tuples.append(
                MhopQuintuple(
                    e0=first.triplet.subject,
                    r1=first.triplet.relation,
                    e1=obj.entity,
                    r2=second.relation,
                    e2=second.object.entity,
                    first_id=first.uid,
                    second_id=changed[j].uid,
                )
            )
    tuples.sort(key=lambda q: (q.first_id, q.second_id))
    return tuples
