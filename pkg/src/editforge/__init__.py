"""editforge: forge QA benchmarks from knowledge-graph snapshot diffs and
evaluate answer-producing models on them along update, generalization,
reasoning, and locality axes."""

__version__ = "0.1.0"

from editforge.models import (
    ChangedTriplet,
    DiffResult,
    EntityRef,
    ObjectValue,
    PropertyRef,
    QaPair,
    SnapshotMeta,
    Triplet,
    TripletStore,
)

__all__ = [
    "ChangedTriplet",
    "DiffResult",
    "EntityRef",
    "ObjectValue",
    "PropertyRef",
    "QaPair",
    "SnapshotMeta",
    "Triplet",
    "TripletStore",
]
