"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest -s`` to see them inline).

Criteria rest on oracle equivalence, invariants, and planted fixtures;
no network access is required (replay/stub providers only).
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from editforge.cli import main
from editforge.diff import diff_snapshots
from editforge.embedding import StubEmbedder
from editforge.evaluate import evaluate_batch, evaluate_history, hop_retrieval_analysis
from editforge.filtering import apply_filters, drop_ambiguous
from editforge.models import (
    ChangedTriplet,
    EntityRef,
    ObjectValue,
    PropertyRef,
    QaPair,
    Triplet,
)
from editforge.probes import MhopQuintuple, build_locality_probes, build_mhop_tuples, pairing_text
from editforge.providers import ConstantModel, ContextCopyModel, TableModel
from editforge.qagen import validate_qa
from editforge.rag import RagAnswerer, RagMemory, add_entries, retrieve
from editforge.store import UpdateBatch, emit_timestep, load_timestep, IntegrityError

from oracles import (
    brute_force_diff,
    exact_knn,
    mutate_rows,
    nested_loop_join,
    random_rows,
    rows_of_store,
    store_from_rows,
)
from test_store import random_batch


def _report(number: int, name: str) -> None:
    print(f"\n[ACCEPTANCE {number:02d}] {name}: PASS")


def _fail(number: int, name: str) -> None:
    print(f"\n[ACCEPTANCE {number:02d}] {name}: FAIL")


class _criterion:
    def __init__(self, number: int, name: str) -> None:
        self.number, self.name = number, name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            _report(self.number, self.name)
        else:
            _fail(self.number, self.name)
        return False


def _t(s: str, p: str, o: str, labels: bool = True) -> Triplet:
    return Triplet(
        EntityRef(s, f"label {s}" if labels else ""),
        PropertyRef(p, f"rel {p}"),
        ObjectValue.of_entity(EntityRef(o, f"label {o}" if labels else "")),
    )


def test_criterion_1_diff_oracle_equivalence():
    with _criterion(1, "diff equals quadratic brute-force on 50 random pairs"):
        rng = random.Random(1001)
        sizes = [10_000] + [rng.randrange(50, 1200) for _ in range(49)]
        diff_time = 0.0
        for case, n in enumerate(sizes):
            universe = max(60, n // 3)
            old_rows = random_rows(rng, n, n_entities=universe)
            new_rows = mutate_rows(rng, old_rows, n_entities=universe)
            old, new = store_from_rows(old_rows), store_from_rows(new_rows)
            start = time.perf_counter()
            result = diff_snapshots(old, new)
            diff_time += time.perf_counter() - start
            got = (
                {(t.subject.id, t.relation.id, t.object.key) for t in result.static_set},
                {
                    (
                        c.triplet.subject.id,
                        c.triplet.relation.id,
                        c.triplet.object.key,
                        c.change_kind,
                        c.old_object.key if c.old_object else None,
                    )
                    for c in result.changed_set
                },
                {(t.subject.id, t.relation.id, t.object.key) for t in result.ambiguous_set},
            )
            want = brute_force_diff(rows_of_store(old), rows_of_store(new))
            assert got == want, f"case {case} (n={n}) diverges from the oracle"
        assert diff_time < 5.0, f"diff took {diff_time:.2f}s over 50 pairs"


def test_criterion_2_filter_conformance():
    with _criterion(2, "filter rules match crafted cases and reconcile"):
        def entity_triplet(subj, rel, obj, subj_id="Q1", obj_id="Q2"):
            return Triplet(
                EntityRef(subj_id, subj),
                PropertyRef("P1", rel),
                ObjectValue.of_entity(EntityRef(obj_id, obj)),
            )

        kept_example = entity_triplet("Lea County Regional Airport", "state of use", "in use")
        cases = [
            (kept_example, None),
            (entity_triplet("iPod", "named after", "iPod"), "circular"),
            (entity_triplet("loop", "same as", "loop other", "Q7", "Q7"), "circular"),
            (entity_triplet("Алексей Иванов", "occupation", "painter"), "non_roman"),
            (entity_triplet("X", "symbol", "Roman ten"), "single_char"),
            (entity_triplet("Alpha", "motto", "one two three four five six"), "long_phrase"),
            (
                Triplet(
                    EntityRef("Q1", "Alpha"),
                    PropertyRef("P1", "population"),
                    ObjectValue.literal("12000", "quantity"),
                ),
                "non_entity",
            ),
            (entity_triplet("Alpha", "partner", "", obj_id="Q9"), "unresolved"),
        ]
        kept, report = apply_filters([c for c, _ in cases])
        assert kept == [kept_example]
        expected_removals: dict[str, int] = {}
        for _, rule in cases:
            if rule:
                expected_removals[rule] = expected_removals.get(rule, 0) + 1
        assert report.removed_by_rule == expected_removals
        assert report.input_count == len(cases)
        assert report.reconciles()
        ambiguous_in = [
            entity_triplet("A", "r", "B", "QA", "QB"),
            entity_triplet("A", "r", "C", "QA", "QC"),
            entity_triplet("D", "r", "E", "QD", "QE"),
        ]
        kept_amb, amb_report = drop_ambiguous(ambiguous_in)
        assert len(kept_amb) == 1 and amb_report.removed_by_rule == {"ambiguous_key": 2}
        assert amb_report.reconciles()


def test_criterion_3_mhop_join_equivalence():
    with _criterion(3, "mhop join equals the nested-loop oracle on 50 instances"):
        podcast = ChangedTriplet(
            Triplet(
                EntityRef("Q1", "podcast"),
                PropertyRef("P1", "named after"),
                ObjectValue.of_entity(EntityRef("Q2", "iPod")),
            ),
            "new",
        )
        ipod = ChangedTriplet(
            Triplet(
                EntityRef("Q2", "iPod"),
                PropertyRef("P2", "manufacturer"),
                ObjectValue.of_entity(EntityRef("Q3", "Apple")),
            ),
            "new",
        )
        (quintuple,) = build_mhop_tuples([podcast, ipod])
        assert (
            quintuple.e0.label,
            quintuple.r1.label,
            quintuple.e1.label,
            quintuple.r2.label,
            quintuple.e2.label,
        ) == ("podcast", "named after", "iPod", "manufacturer", "Apple")

        rng = random.Random(3003)
        sizes = [5000] + [rng.randrange(20, 800) for _ in range(49)]
        for n in sizes:
            universe = max(20, n // 2)
            rows = list(
                {
                    (
                        f"Q{rng.randrange(universe)}",
                        f"P{rng.randrange(5)}",
                        f"Q{rng.randrange(universe)}",
                    )
                    for _ in range(n)
                }
            )
            rows = [r for r in rows if r[0] != r[2]]
            items = [
                ChangedTriplet(_t(s, p, o), "new") for s, p, o in rows
            ]
            got = {(q.first_id, q.second_id) for q in build_mhop_tuples(items)}
            want = {
                (items[i].uid, items[j].uid) for i, j in nested_loop_join(rows)
            }
            assert got == want, f"join mismatch at n={n}"


def test_criterion_4_locality_pairing_oracle():
    with _criterion(4, "locality top-1 matches exhaustive scan on 1000 cases"):
        rng = random.Random(4004)
        relations = ["capital", "anthem", "partner city", "highest point", "chief editor"]
        names = [f"Place {i}" for i in range(30)]

        def rand_triplet():
            subj = rng.choice(names)
            obj = rng.choice(names)
            rel = rng.choice(relations)
            return Triplet(
                EntityRef(f"Q:{subj}", subj),
                PropertyRef(f"P:{rel}", rel),
                ObjectValue.of_entity(EntityRef(f"Q:{obj}", obj)),
            )

        static = [rand_triplet() for _ in range(400)]
        changed = [ChangedTriplet(rand_triplet(), "new") for _ in range(1000)]
        embedder = StubEmbedder()
        probes = build_locality_probes(changed, static, embedder)
        probes_by_changed = {p.changed_id: p for p in probes}

        static_vecs = embedder.embed([pairing_text(t) for t in static])
        checked = 0
        for item in changed:
            query = embedder.embed([pairing_text(item.triplet)])[0]
            order = sorted(
                range(len(static)),
                key=lambda i: (-float(np.dot(static_vecs[i], query)), i),
            )
            expected = None
            for i in order:
                cand = static[i]
                if cand.object.key != item.triplet.object.key and (
                    cand.object.label.casefold() != item.triplet.object.label.casefold()
                ):
                    expected = cand
                    break
            probe = probes_by_changed.get(item.uid)
            if expected is None:
                assert probe is None
                continue
            assert probe is not None, f"missing probe for {item.uid}"
            assert probe.probe.uid == expected.uid
            assert probe.probe.object.key != item.triplet.object.key
            checked += 1
        assert checked > 900  # the oracle actually exercised the constraint


TURNBERRY = Triplet(
    EntityRef("Q:tl", "Turnberry Lighthouse"),
    PropertyRef("P:color", "color", "The color of the subject."),
    ObjectValue.of_entity(EntityRef("Q:white", "white")),
)

NOVAK = MhopQuintuple(
    e0=EntityRef("Q:jn", "Josef Novak"),
    r1=PropertyRef("P:coc", "country of citizenship"),
    e1=EntityRef("Q:hu", "Hungary"),
    r2=PropertyRef("P:hp", "highest point"),
    e2=EntityRef("Q:ke", "Kékes"),
    first_id="a",
    second_id="b",
)


def test_criterion_5_qa_validation_examples():
    with _criterion(5, "template examples validate; mutants fail with reasons"):
        good = QaPair(
            id="x", kind="update",
            question="What is the color of Turnberry Lighthouse?", answer="white",
        )
        assert validate_qa(good, TURNBERRY).passed
        mhop_good = QaPair(
            id="y", kind="mhop",
            question="What is the highest point of the country of citizenship of Josef Novak?",
            answer="Kékes",
        )
        assert validate_qa(mhop_good, NOVAK).passed
        leak = QaPair(
            id="x", kind="update",
            question="Is white the color of Turnberry Lighthouse?", answer="white",
        )
        verdict = validate_qa(leak, TURNBERRY)
        assert not verdict.passed and "answer-leak" in verdict.reasons
        anonymous = QaPair(id="x", kind="update", question="What is its color?", answer="white")
        verdict = validate_qa(anonymous, TURNBERRY)
        assert not verdict.passed and "missing-subject" in verdict.reasons


def _tree_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_criterion_6_pipeline_determinism(tmp_path, fixture_dir, snapshot_fixture):
    with _criterion(6, "pipeline on the fixture pair is byte-deterministic"):
        replay = tmp_path / "replay"
        config = tmp_path / "config.toml"

        def write_config(record: bool) -> None:
            config.write_text(
                f"""
seed = 7
[pipeline]
timestep_id = "T1"
date_start = "2024-02-01"
date_end = "2024-02-20"
[ingest]
old = "{fixture_dir}/old"
new = "{fixture_dir}/new"
[qa]
provider = "replay"
replay_dir = "{replay}"
record = {str(record).lower()}
""",
                encoding="utf-8",
            )

        write_config(record=True)  # populate the canned responses once
        assert main(["pipeline", "--config", str(config), "--out-dir", str(tmp_path / "seed-run")]) == 0
        write_config(record=False)
        for name in ("run1", "run2"):
            assert main(
                ["pipeline", "--config", str(config), "--out-dir", str(tmp_path / name), "--seed", "7"]
            ) == 0
        assert _tree_digest(tmp_path / "run1") == _tree_digest(tmp_path / "run2")
        manifest = json.loads((tmp_path / "run1/dataset/T1/manifest.json").read_text())
        assert manifest["counts"] == snapshot_fixture.expected["dataset_counts"]


def test_criterion_7_rag_retrieval_oracles():
    with _criterion(7, "exact kNN oracle equivalence and approximate recall"):
        rng = np.random.default_rng(7007)
        n, dim = 10_000, 64
        vectors = rng.normal(size=(n, dim))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

        class RawEmbedder:
            def __init__(self):
                self.dim = dim
                self.mapping = {f"t{i}": vectors[i] for i in range(n)}

            def embed(self, texts):
                return np.asarray([self.mapping[t] for t in texts])

        embedder = RawEmbedder()
        pairs = [
            QaPair(id=f"up:{i:05d}", kind="update", question=f"t{i}", answer=f"a{i}")
            for i in range(n)
        ]
        exact_memory = RagMemory(dim=dim, mode="exact")
        add_entries(exact_memory, pairs, embedder)
        assert len(exact_memory) == n
        norms = np.linalg.norm(exact_memory._matrix[:n], axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-6)
        matrix = exact_memory._matrix[:n].astype(np.float64)
        for case in range(30):
            query = rng.normal(size=dim)
            query /= np.linalg.norm(query)
            embedder.mapping[f"q{case}"] = query
            for k in (1, 2, 10):
                got = [e.id for e, _ in retrieve(exact_memory, f"q{case}", k, embedder)]
                want = [f"up:{i:05d}" for i in exact_knn(matrix, query.astype(np.float32), k)]
                assert got == want, f"exact kNN mismatch at k={k}"

        approx_memory = RagMemory(dim=dim, mode="approx")
        add_entries(approx_memory, pairs, embedder)
        hits = total = 0
        for case in range(100):
            query = rng.normal(size=dim)
            query /= np.linalg.norm(query)
            embedder.mapping[f"r{case}"] = query
            want = {e.id for e, _ in retrieve(exact_memory, f"r{case}", 2, embedder)}
            got = {e.id for e, _ in retrieve(approx_memory, f"r{case}", 2, embedder)}
            hits += len(want & got)
            total += 2
        recall = hits / total
        assert recall >= 0.95, f"approximate recall@2 = {recall:.4f}"

        stub = StubEmbedder(dim=32)
        stub_memory = RagMemory(dim=32)
        add_entries(
            stub_memory,
            [
                QaPair(id="up:a", kind="update", question="What is the capital of Norway?", answer="Oslo"),
                QaPair(id="up:b", kind="update", question="Unrelated trivia question?", answer="x"),
            ],
            stub,
        )
        results = retrieve(stub_memory, "What is the capital of Norway?", 2, stub)
        assert results[0][0].id == "up:a"
        assert abs(results[0][1] - 1.0) <= 1e-6


# chosen so the stub embedder puts every token in its own hash bucket
_QUESTION_WORDS = [
    "alder", "cedar", "damson", "elder", "hazel", "ilex", "jacaranda",
    "katsura", "magnolia", "nyssa", "olive", "pawpaw", "quince", "rowan",
    "sequoia", "tupelo", "willow", "yew", "aspen", "linden",
]


def _update_batches(n_batches: int, per_batch: int, embedder: StubEmbedder) -> list[UpdateBatch]:
    """Batches whose questions embed to pairwise-distinct stub vectors, so
    an exact-match retrieval premise actually holds (asserted below)."""
    batches = []
    questions = []
    for b in range(n_batches):
        updates = [
            QaPair(
                id=f"up:{b}-{i:03d}",
                kind="update",
                question=f"What is the {_QUESTION_WORDS[i]} fact of timestep number {b}?",
                answer=f"value {b}-{i}",
                timestep_id=f"T{b + 1}",
                provenance=(f"uid-{b}-{i}",),
            )
            for i in range(per_batch)
        ]
        questions.extend(p.question for p in updates)
        batches.append(
            UpdateBatch(
                timestep_id=f"T{b + 1}",
                date_range=("2024-01-01", "2024-02-01"),
                sets={"update": updates, "locality": [], "rephrase": [], "persona": [], "mhop": []},
            )
        )
    vectors = embedder.embed(questions)
    assert len({tuple(v) for v in vectors}) == len(questions), "stub embedding collision"
    return batches


def test_criterion_8_rag_memorization_no_forgetting():
    with _criterion(8, "RAG memorization: update accuracy 1.000, zero forgetting"):
        embedder = StubEmbedder(dim=64)
        batches = _update_batches(3, 20, embedder)
        memory = RagMemory(dim=64)
        states = []
        for batch in batches:
            add_entries(memory, batch.sets["update"], embedder)
            states.append(RagAnswerer(memory.snapshot(), ContextCopyModel(), embedder, k=2))
        (record,) = evaluate_batch(states[0], batches[0], axes=("update",))
        assert record.accuracy == 1.0
        matrix = evaluate_history(states, batches)
        assert matrix.is_lower_triangular()
        for row in matrix.rows:
            assert all(value == 1.0 for value in row), matrix.rows


def test_criterion_9_forgetting_matrix_bookkeeping():
    with _criterion(9, "scripted forgetting matrix equals the hand-computed table"):
        batches = _update_batches(3, 4, StubEmbedder(dim=64))

        def table_for(batch, fraction):
            count = int(len(batch.sets["update"]) * fraction)
            return {p.question: p.answer for p in batch.sets["update"][:count]}

        states = [
            TableModel(table_for(batches[0], 1.0)),
            TableModel({**table_for(batches[0], 0.75), **table_for(batches[1], 1.0)}),
            TableModel(
                {
                    **table_for(batches[0], 0.5),
                    **table_for(batches[1], 1.0),
                    **table_for(batches[2], 0.75),
                }
            ),
        ]
        matrix = evaluate_history(states, batches)
        assert matrix.rows == [[1.0], [0.75, 1.0], [0.5, 1.0, 0.75]]
        assert matrix.is_lower_triangular()
        for step, model in enumerate(states):
            (record,) = evaluate_batch(model, batches[step], axes=("update",))
            assert matrix[step][step] == record.accuracy


def test_criterion_10_hop_diagnostics():
    with _criterion(10, "hop stats match planted rates and respect the bound"):
        # planted: the mhop query overlaps constituent 1 and a distractor
        class MapEmbedder:
            def __init__(self, dim, table):
                self.dim = dim
                self.table = table

            def embed(self, texts):
                out = np.zeros((len(texts), self.dim))
                for i, text in enumerate(texts):
                    dims = self.table.get(text, (self.dim - 1,))
                    out[i, list(dims)] = 1.0 / math.sqrt(len(dims))
                return out

        updates = [
            QaPair(id="up:0", kind="update", question="first?", answer="bridge", provenance=("u0",)),
            QaPair(id="up:1", kind="update", question="second?", answer="target", provenance=("u1",)),
            QaPair(id="up:2", kind="update", question="noise?", answer="noise", provenance=("u2",)),
        ]
        mhop = QaPair(
            id="mh:0", kind="mhop", question="combined?", answer="target",
            provenance=("u0", "u1"),
        )
        embedder = MapEmbedder(8, {"first?": (0,), "second?": (1,), "noise?": (2,), "combined?": (0, 2)})
        memory = RagMemory(dim=8)
        add_entries(memory, updates, embedder)
        stats = hop_retrieval_analysis(
            memory, [mhop], ConstantModel("target"), k=2,
            embedder=embedder, updates=updates,
        )
        assert (stats.hop1_retrieved, stats.hop2_retrieved, stats.both_retrieved) == (1.0, 0.0, 0.0)
        assert stats.accuracy_given_hop1_only == 1.0

        # the bound both <= min(hop1, hop2) across randomized runs
        rng = random.Random(1010)
        stub = StubEmbedder(dim=16)
        for _ in range(1000):
            n_mem = rng.randrange(2, 7)
            mem_pairs = [
                QaPair(
                    id=f"up:{i}", kind="update",
                    question=f"mem {rng.randrange(40)} {i}?", answer=f"a{i}",
                    provenance=(f"u{i}",),
                )
                for i in range(n_mem)
            ]
            memory = RagMemory(dim=16)
            add_entries(memory, mem_pairs, stub)
            first, second = rng.sample(range(n_mem), 2)
            probe = QaPair(
                id="mh:x", kind="mhop",
                question=f"chain {rng.randrange(40)}?", answer=f"a{second}",
                provenance=(f"u{first}", f"u{second}"),
            )
            k = rng.randrange(1, n_mem + 1)
            stats = hop_retrieval_analysis(
                memory, [probe], ContextCopyModel(), k=k, embedder=stub, updates=mem_pairs
            )
            assert stats.both_retrieved <= min(stats.hop1_retrieved, stats.hop2_retrieved) + 1e-12

        # k = |M|: both constituents are always retrieved
        stats = hop_retrieval_analysis(
            memory, [probe], ContextCopyModel(), k=len(memory), embedder=stub, updates=mem_pairs
        )
        assert stats.both_retrieved == 1.0


def test_criterion_11_store_round_trip(tmp_path):
    with _criterion(11, "200 emit/load round-trips plus corruption detection"):
        rng = random.Random(1111)
        for case in range(200):
            batch = random_batch(rng, f"T{case}")
            emit_timestep(batch, tmp_path)
            loaded = load_timestep(tmp_path / batch.timestep_id)
            for kind, pairs in batch.sets.items():
                want = sorted(pairs, key=lambda p: p.id)
                assert [p.record() for p in loaded.sets[kind]] == [p.record() for p in want]
        victim_dir = tmp_path / "T0"
        target = victim_dir / "update.jsonl"
        blob = bytearray(target.read_bytes())
        blob[len(blob) // 2] ^= 0x20
        target.write_bytes(bytes(blob))
        with pytest.raises(IntegrityError):
            load_timestep(victim_dir)
