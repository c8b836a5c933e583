"""Evaluation harness: five-axis accuracy per batch, longitudinal
forgetting bookkeeping, locality consistency against the pre-update
model, hop-level retrieval diagnostics, and temporal/specificity
binning of verdicts."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from editforge.embedding import EmbeddingProvider
from editforge.models import QaPair
from editforge.providers import ModelProvider
from editforge.rag import RagMemory, build_context, retrieve
from editforge.store import UpdateBatch
from editforge.textnorm import normalize

logger = logging.getLogger(__name__)

AXES = ("update", "rephrase", "personas", "mhop", "locality")
AXIS_TO_KIND = {
    "update": "update",
    "rephrase": "rephrase",
    "personas": "persona",
    "mhop": "mhop",
    "locality": "locality",
}


def judge_answer(generated: str, gold: str, mode: str = "contains") -> bool:
    """Normalized answer matching. `contains` (default) accepts the gold
    answer anywhere inside the generated text; `exact` demands equality."""
    gen_norm = normalize(generated)
    gold_norm = normalize(gold)
    if mode == "exact":
        return gen_norm == gold_norm
    if mode == "contains":
        return bool(gold_norm) and gold_norm in gen_norm
    raise ValueError(f"unknown judge mode {mode!r}")


@dataclass
class EvalRecord:
    timestep_id: str
    axis: str
    n: int
    accuracy: float
    verdicts: list[dict] = field(default_factory=list)
    errored: int = 0

    def to_dict(self, with_verdicts: bool = False) -> dict:
        data = {
            "timestep_id": self.timestep_id,
            "axis": self.axis,
            "n": self.n,
            "accuracy": self.accuracy,
            "errored": self.errored,
        }
        if with_verdicts:
            data["verdicts"] = self.verdicts
        return data


def _ask_all(
    model: ModelProvider,
    pairs: Sequence[QaPair],
    max_inflight: int,
    max_retries: int,
) -> list[Union[str, Exception]]:
    def one(pair: QaPair) -> Union[str, Exception]:
        last: Exception = RuntimeError("no attempt made")
        for _ in range(max_retries):
            try:
                return model.answer(pair.question)
            except Exception as exc:
                last = exc
        return last

    if not pairs:
        return []
    workers = max(1, min(max_inflight, len(pairs)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, pairs))


def evaluate_batch(
    model: ModelProvider,
    batch: UpdateBatch,
    axes: Optional[Sequence[str]] = None,
    judge_mode: str = "contains",
    max_inflight: int = 8,
    max_retries: int = 2,
) -> list[EvalRecord]:
    """One EvalRecord per requested axis. Questions are asked in id order
    and verdicts keyed by id, so results are independent of completion
    order. Items failing after retries are excluded from n."""
    records: list[EvalRecord] = []
    for axis in axes or AXES:
        if axis not in AXIS_TO_KIND:
            raise ValueError(f"unknown evaluation axis {axis!r}")
        pairs = sorted(batch.sets.get(AXIS_TO_KIND[axis], []), key=lambda p: p.id)
        answers = _ask_all(model, pairs, max_inflight, max_retries)
        verdicts: list[dict] = []
        correct = errored = 0
        for pair, answer in zip(pairs, answers):
            if isinstance(answer, Exception):
                errored += 1
                verdicts.append({"id": pair.id, "errored": True})
                continue
            ok = judge_answer(answer, pair.answer, judge_mode)
            correct += int(ok)
            verdicts.append({"id": pair.id, "correct": ok, "generated": answer})
        n = len(pairs) - errored
        records.append(
            EvalRecord(
                timestep_id=batch.timestep_id,
                axis=axis,
                n=n,
                accuracy=(correct / n) if n else 0.0,
                verdicts=verdicts,
                errored=errored,
            )
        )
        if errored:
            logger.warning("axis %s: %d items errored and were excluded", axis, errored)
    return records


class ForgettingMatrix:
    """Lower-triangular accuracy bookkeeping: rows[b][j] is accuracy on
    batch j's update set after ingesting batch b (j <= b)."""

    def __init__(self, rows: Optional[list[list[float]]] = None) -> None:
        self.rows = rows or []

    def __getitem__(self, step: int) -> list[float]:
        return self.rows[step]

    @property
    def n_steps(self) -> int:
        return len(self.rows)

    def diagonal(self) -> list[float]:
        return [row[i] for i, row in enumerate(self.rows)]

    def is_lower_triangular(self) -> bool:
        return all(len(row) == i + 1 for i, row in enumerate(self.rows))

    def to_dict(self) -> dict:
        return {"rows": [list(row) for row in self.rows]}


def evaluate_history(
    model_states: Sequence[ModelProvider],
    batches: Sequence[UpdateBatch],
    judge_mode: str = "contains",
    max_inflight: int = 8,
) -> ForgettingMatrix:
    """Continuously re-evaluate earlier batches' update sets under each
    successive model state."""
    if len(model_states) != len(batches):
        raise ValueError(
            f"{len(model_states)} model states for {len(batches)} batches"
        )
    matrix = ForgettingMatrix()
    for step, model in enumerate(model_states):
        row = []
        for j in range(step + 1):
            (record,) = evaluate_batch(
                model,
                batches[j],
                axes=("update",),
                judge_mode=judge_mode,
                max_inflight=max_inflight,
            )
            row.append(record.accuracy)
        matrix.rows.append(row)
    return matrix


def locality_consistency(
    before: ModelProvider,
    after: ModelProvider,
    probes: Sequence[QaPair],
    judge_mode: str = "contains",
    max_inflight: int = 8,
) -> dict:
    """Gold accuracy of the updated model on locality probes, plus the
    fraction of probes whose answer is unchanged from the pre-update
    model (normalized comparison)."""
    probes = sorted(probes, key=lambda p: p.id)
    before_answers = _ask_all(before, probes, max_inflight, max_retries=2)
    after_answers = _ask_all(after, probes, max_inflight, max_retries=2)
    n = correct = same = 0
    for pair, b_ans, a_ans in zip(probes, before_answers, after_answers):
        if isinstance(b_ans, Exception) or isinstance(a_ans, Exception):
            continue
        n += 1
        correct += int(judge_answer(a_ans, pair.answer, judge_mode))
        same += int(normalize(b_ans) == normalize(a_ans))
    return {
        "accuracy_after": (correct / n) if n else 0.0,
        "consistency": (same / n) if n else 0.0,
        "n": n,
    }


@dataclass
class HopStats:
    n: int
    hop1_retrieved: float
    hop2_retrieved: float
    both_retrieved: float
    accuracy_given_both: Optional[float]
    accuracy_given_hop1_only: Optional[float]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "hop1_retrieved": self.hop1_retrieved,
            "hop2_retrieved": self.hop2_retrieved,
            "both_retrieved": self.both_retrieved,
            "accuracy_given_both": self.accuracy_given_both,
            "accuracy_given_hop1_only": self.accuracy_given_hop1_only,
        }


def hop_retrieval_analysis(
    memory: RagMemory,
    mhop_pairs: Sequence[QaPair],
    model: ModelProvider,
    k: int,
    embedder: EmbeddingProvider,
    updates: Sequence[QaPair],
    judge_mode: str = "contains",
) -> HopStats:
    """Per multi-hop question: did top-k retrieval surface the first
    constituent update entry, the second, or both; and how accurate is
    the model conditioned on what was retrieved.

    `updates` supplies the mapping from constituent triplet provenance
    to the memory entry ids built from those update pairs.
    """
    entry_by_provenance = {
        u.provenance[0]: u.id for u in updates if u.provenance
    }
    n = 0
    hop1 = hop2 = both = 0
    correct_both = n_both = 0
    correct_hop1_only = n_hop1_only = 0
    for pair in sorted(mhop_pairs, key=lambda p: p.id):
        if len(pair.provenance) != 2:
            continue
        n += 1
        retrieved = retrieve(memory, pair.question, k, embedder)
        retrieved_ids = {entry.id for entry, _ in retrieved}
        first_id = entry_by_provenance.get(pair.provenance[0])
        second_id = entry_by_provenance.get(pair.provenance[1])
        got1 = first_id is not None and first_id in retrieved_ids
        got2 = second_id is not None and second_id in retrieved_ids
        hop1 += int(got1)
        hop2 += int(got2)
        both += int(got1 and got2)
        context = build_context(pair.question, retrieved)
        answer = model.answer(pair.question, context=context.text)
        ok = judge_answer(answer, pair.answer, judge_mode)
        if got1 and got2:
            n_both += 1
            correct_both += int(ok)
        elif got1:
            n_hop1_only += 1
            correct_hop1_only += int(ok)
    return HopStats(
        n=n,
        hop1_retrieved=(hop1 / n) if n else 0.0,
        hop2_retrieved=(hop2 / n) if n else 0.0,
        both_retrieved=(both / n) if n else 0.0,
        accuracy_given_both=(correct_both / n_both) if n_both else None,
        accuracy_given_hop1_only=(
            correct_hop1_only / n_hop1_only if n_hop1_only else None
        ),
    )


# -- verdict binning ----------------------------------------------------

BIN_KEYS = ("fact_year", "subject_count", "object_count")


def load_annotations(path: Union[str, Path]) -> dict[str, dict]:
    """Read the annotations sidecar: one JSON object per line carrying
    "id" plus optional fact_year / subject_count / object_count /
    subject_views / object_views fields."""
    table: dict[str, dict] = {}
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                record = json.loads(line)
                table[record["id"]] = record
    return table


def bin_records(
    verdicts: Sequence[dict],
    key: str,
    bins: Union[int, Sequence[float]],
    annotations: dict[str, dict],
) -> tuple[list[dict], int]:
    """Accuracy histogram over an annotation key.

    `bins` as an integer requests rank-based quantile bins (sizes within
    one of each other); a sequence is used as explicit edges with the
    last bin closed. Records lacking the annotation are skipped and
    counted. Empty bins are omitted.
    """
    if key not in BIN_KEYS:
        raise ValueError(f"unknown binning key {key!r}")
    annotated: list[tuple[float, bool]] = []
    skipped = 0
    for verdict in verdicts:
        if verdict.get("errored"):
            skipped += 1
            continue
        note = annotations.get(verdict["id"])
        if note is None or note.get(key) is None:
            skipped += 1
            continue
        annotated.append((float(note[key]), bool(verdict["correct"])))
    histogram: list[dict] = []
    if not annotated:
        return histogram, skipped
    if isinstance(bins, int):
        annotated.sort(key=lambda item: item[0])
        total = len(annotated)
        base, remainder = divmod(total, bins)
        start = 0
        for b in range(bins):
            size = base + (1 if b < remainder else 0)
            if size == 0:
                continue
            chunk = annotated[start : start + size]
            start += size
            histogram.append(_bin_entry(chunk[0][0], chunk[-1][0], chunk))
    else:
        edges = list(bins)
        for low, high in zip(edges, edges[1:]):
            last = high == edges[-1]
            chunk = [
                (v, ok)
                for v, ok in annotated
                if (low <= v < high) or (last and v == high)
            ]
            if chunk:
                histogram.append(_bin_entry(low, high, chunk))
    return histogram, skipped


def _bin_entry(low: float, high: float, chunk: list[tuple[float, bool]]) -> dict:
    n = len(chunk)
    return {
        "low": low,
        "high": high,
        "n": n,
        "accuracy": sum(ok for _, ok in chunk) / n,
    }
