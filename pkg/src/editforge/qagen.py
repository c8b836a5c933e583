"""QA synthesis: render prompts, call a generation provider for the five
probe families (update, locality, rephrase, persona, mhop), and validate
every output before it may enter a dataset.

Update and locality answers are always overwritten with the source
object label, guarding against the provider paraphrasing the object.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from editforge.models import ChangedTriplet, QaPair, Triplet
from editforge.probes import LocalityProbe, MhopQuintuple
from editforge.prompts import TemplateRegistry, render_prompt
from editforge.providers import (
    GenerationProvider,
    GenerationRequest,
    generate_many,
)
from editforge.textnorm import contains_phrase, content_tokens, normalize


@dataclass(frozen=True)
class PersonaSpec:
    name: str
    description: str


DEFAULT_PERSONAS: dict[str, PersonaSpec] = {
    spec.name: spec
    for spec in (
        PersonaSpec(
            "Detective",
            "You are a world-weary detective narrating your investigations. "
            "Your tone is gritty, mysterious, and evocative of noir fiction. "
            "Reformulate the following questions as if you're puzzling out "
            "clues in a case. Keep the core meaning intact but phrase it in "
            "your distinct detective style.",
        ),
        PersonaSpec(
            "Casual",
            "You are a casual, friendly conversationalist with a relaxed and "
            "approachable tone. You're curious and engaging, as if you're "
            "chatting with a friend over coffee or in a group discussion. "
            "Reformulate the following questions to sound natural and "
            "conversational while keeping the core meaning intact.",
        ),
        PersonaSpec(
            "Pirate",
            "You are a swashbuckling pirate with a flair for colorful "
            "language and sea-themed metaphors. Your tone is bold, rough, "
            "and full of pirate lingo, as if you're recounting tales from "
            "the high seas. Reformulate the following questions to sound "
            "like they're being asked by a true pirate. Keep the core "
            "meaning intact but add a piratical twist.",
        ),
        PersonaSpec(
            "Philosopher",
            "You are an ancient philosopher, deeply contemplative and wise, "
            "always pondering the greater truths of existence. Your tone is "
            "reflective, profound, and formal, as if you are crafting a "
            "dialogue or treatise on the nature of knowledge and events. "
            "Reformulate the following questions as if they are inquiries "
            "befitting philosophical discourse. Keep the core meaning intact "
            "but phrase it in your distinct, thoughtful style.",
        ),
        PersonaSpec(
            "Caveman",
            "You are a caveman, speaking in simple and primitive language, "
            "with short sentences and limited vocabulary. Your tone is "
            "direct, straightforward, and reflects the early stages of human "
            "communication. Reformulate the following questions in a way "
            "that matches your basic and minimalistic speech style, while "
            "keeping the core meaning intact.",
        ),
    )
}

PERSONA_ORDER = tuple(DEFAULT_PERSONAS)

STRICT_FORMAT_SUFFIX = (
    "\n\nRespond with exactly two lines: the first starting with 'Q:' and "
    "the second starting with 'A:'."
)
VARIATION_SUFFIX = (
    "\n\nThe reformulated question must differ in wording from the original "
    "question."
)

_Q_RE = re.compile(r"^\s*(?:[-*]\s*)?Q:\s*(.+?)\s*$", re.MULTILINE | re.IGNORECASE)
_A_RE = re.compile(r"^\s*(?:[-*]\s*)?A:\s*(.+?)\s*$", re.MULTILINE | re.IGNORECASE)
_REFORM_RE = re.compile(
    r"Reformulated Question:\s*(.+?)\s*$", re.MULTILINE | re.IGNORECASE
)


class ResponseParseError(Exception):
    pass


def parse_qa_response(text: str) -> tuple[str, str]:
    q_match = _Q_RE.search(text)
    if not q_match:
        raise ResponseParseError("no 'Q:' line in response")
    a_match = _A_RE.search(text, q_match.end())
    if not a_match:
        raise ResponseParseError("no 'A:' line after the question")
    return q_match.group(1), a_match.group(1)


def parse_reformulated(text: str) -> str:
    match = _REFORM_RE.search(text)
    if not match:
        raise ResponseParseError("no 'Reformulated Question:' line in response")
    return match.group(1)


@dataclass
class ValidationResult:
    passed: bool
    reasons: tuple[str, ...] = ()


def validate_qa(
    qa: QaPair, source: Union[Triplet, MhopQuintuple]
) -> ValidationResult:
    """Final quality gate: the question must name the subject and touch
    the relation without giving away the answer, and the answer must be
    exactly the object (all compared after normalization)."""
    if isinstance(source, MhopQuintuple):
        subject_label = source.e0.label
        relation_labels = [source.r1.label, source.r2.label]
        answer_label = source.e2.label
    else:
        subject_label = source.subject.label
        relation_labels = [source.relation.label]
        answer_label = source.object.label
    reasons: list[str] = []
    if not contains_phrase(qa.question, subject_label):
        reasons.append("missing-subject")
    relation_tokens = {
        tok for label in relation_labels for tok in content_tokens(label)
    }
    if relation_tokens:  # waived for all-stopword relation labels
        question_tokens = set(normalize(qa.question).split())
        if not relation_tokens & question_tokens:
            reasons.append("missing-relation")
    if contains_phrase(qa.question, answer_label):
        reasons.append("answer-leak")
    if normalize(qa.answer) != normalize(answer_label):
        reasons.append("answer-mismatch")
    return ValidationResult(passed=not reasons, reasons=tuple(reasons))


@dataclass
class ForgeParams:
    temperature: float = 0.7
    max_tokens: int = 256
    max_inflight: int = 8
    seed: int = 7
    model_by_kind: dict[str, str] = field(default_factory=dict)
    template_dir: Optional[str] = None

    def model_for(self, kind: str) -> str:
        return self.model_by_kind.get(kind, "default")

    def registry(self) -> TemplateRegistry:
        return TemplateRegistry(self.template_dir)


def _source_triplet(item: Union[Triplet, ChangedTriplet, LocalityProbe]) -> Triplet:
    if isinstance(item, ChangedTriplet):
        return item.triplet
    if isinstance(item, LocalityProbe):
        return item.probe
    return item


def _qa_id(kind: str, item: Union[Triplet, ChangedTriplet, LocalityProbe, MhopQuintuple]) -> str:
    if isinstance(item, MhopQuintuple):
        return f"mh:{item.first_id}+{item.second_id}"
    if kind == "locality" and isinstance(item, LocalityProbe):
        return f"lo:{item.changed_id}"
    prefix = {"update": "up", "locality": "lo"}[kind]
    return f"{prefix}:{_source_triplet(item).uid}"


def _build_pair(
    kind: str,
    item: Union[Triplet, ChangedTriplet, LocalityProbe, MhopQuintuple],
    question: str,
    answer: str,
    timestep_id: str,
) -> QaPair:
    if isinstance(item, MhopQuintuple):
        return QaPair(
            id=_qa_id(kind, item),
            kind=kind,
            question=question,
            answer=answer,
            timestep_id=timestep_id,
            provenance=(item.first_id, item.second_id),
            subject=item.e0.label,
            relation=f"{item.r1.label} | {item.r2.label}",
            object=item.e2.label,
        )
    triplet = _source_triplet(item)
    return QaPair(
        id=_qa_id(kind, item),
        kind=kind,
        question=question,
        answer=answer,
        timestep_id=timestep_id,
        provenance=(triplet.uid,),
        subject=triplet.subject.label,
        relation=triplet.relation.label,
        object=triplet.object.label,
    )


def _render_for(
    kind: str,
    item: Union[Triplet, ChangedTriplet, LocalityProbe, MhopQuintuple],
    registry: TemplateRegistry,
) -> str:
    if isinstance(item, MhopQuintuple):
        return render_prompt("mhop", item, registry=registry)
    return render_prompt("update_locality", _source_triplet(item), registry=registry)


def generate_qa(
    item: Union[Triplet, ChangedTriplet, LocalityProbe, MhopQuintuple],
    kind: str,
    provider: GenerationProvider,
    params: Optional[ForgeParams] = None,
    timestep_id: str = "",
) -> QaPair:
    """Generate one update/locality/mhop pair. Raises ResponseParseError
    after one structured retry if the provider output stays unparseable."""
    params = params or ForgeParams()
    registry = params.registry()
    prompt = _render_for(kind, item, registry)
    request = GenerationRequest(
        prompt=prompt,
        model=params.model_for(kind),
        temperature=params.temperature,
        max_tokens=params.max_tokens,
    )
    response = provider.generate(request)
    try:
        question, answer = parse_qa_response(response.text)
    except ResponseParseError:
        retry = GenerationRequest(
            prompt=prompt + STRICT_FORMAT_SUFFIX,
            model=request.model,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
        )
        question, answer = parse_qa_response(provider.generate(retry).text)
    if kind in ("update", "locality"):
        answer = _source_triplet(item).object.label  # exact object text
    return _build_pair(kind, item, question, answer, timestep_id)


def _reformulate(
    qa: QaPair,
    kind: str,
    provider: GenerationProvider,
    params: ForgeParams,
    persona: Optional[PersonaSpec],
) -> Optional[str]:
    registry = params.registry()
    template_id = "persona" if persona else "rephrase"
    description = persona.description if persona else ""
    prompt = render_prompt(template_id, qa, persona_description=description, registry=registry)
    request = GenerationRequest(
        prompt=prompt,
        model=params.model_for(kind),
        temperature=params.temperature,
        max_tokens=params.max_tokens,
    )
    question = parse_reformulated(provider.generate(request).text)
    if question.strip().casefold() == qa.question.strip().casefold():
        retry = GenerationRequest(
            prompt=prompt + VARIATION_SUFFIX,
            model=request.model,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
        )
        question = parse_reformulated(provider.generate(retry).text)
        if question.strip().casefold() == qa.question.strip().casefold():
            return None
    return question


def generate_rephrase(
    qa: QaPair,
    provider: GenerationProvider,
    params: Optional[ForgeParams] = None,
) -> Optional[QaPair]:
    """Rephrase an update pair; None when the provider keeps echoing the
    original question (one retry allowed)."""
    params = params or ForgeParams()
    question = _reformulate(qa, "rephrase", provider, params, persona=None)
    if question is None:
        return None
    return QaPair(
        id=f"re:{qa.provenance[0]}" if qa.provenance else f"re:{qa.id}",
        kind="rephrase",
        question=question,
        answer=qa.answer,
        timestep_id=qa.timestep_id,
        provenance=qa.provenance,
        subject=qa.subject,
        relation=qa.relation,
        object=qa.object,
        parent_id=qa.id,
    )


def generate_persona(
    qa: QaPair,
    persona: PersonaSpec,
    provider: GenerationProvider,
    params: Optional[ForgeParams] = None,
) -> Optional[QaPair]:
    params = params or ForgeParams()
    question = _reformulate(qa, "persona", provider, params, persona=persona)
    if question is None:
        return None
    return QaPair(
        id=f"pe:{qa.provenance[0]}" if qa.provenance else f"pe:{qa.id}",
        kind="persona",
        question=question,
        answer=qa.answer,
        timestep_id=qa.timestep_id,
        provenance=qa.provenance,
        subject=qa.subject,
        relation=qa.relation,
        object=qa.object,
        persona=persona.name,
        parent_id=qa.id,
    )


def pick_persona(seed: int, parent_id: str) -> PersonaSpec:
    """Uniform per-item persona choice, stable under any processing order."""
    rng = random.Random(f"{seed}:{parent_id}")
    return DEFAULT_PERSONAS[rng.choice(PERSONA_ORDER)]


# -- batch orchestration ------------------------------------------------


@dataclass
class ForgeReport:
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    drops: Counter = field(default_factory=Counter)

    def record_kind(self, kind: str, requested: int, generated: int, validated: int) -> None:
        self.counts[kind] = {
            "requested": requested,
            "generated": generated,
            "validated": validated,
        }

    @property
    def total_requested(self) -> int:
        return sum(c["requested"] for c in self.counts.values())

    @property
    def total_dropped(self) -> int:
        return sum(self.drops.values())

    def to_dict(self) -> dict:
        return {
            "counts": {k: dict(v) for k, v in sorted(self.counts.items())},
            "drops": dict(sorted(self.drops.items())),
        }


def _generate_fact_kind(
    kind: str,
    items: Sequence[Union[Triplet, ChangedTriplet, LocalityProbe, MhopQuintuple]],
    provider: GenerationProvider,
    params: ForgeParams,
    timestep_id: str,
    report: ForgeReport,
) -> list[QaPair]:
    registry = params.registry()
    requests = []
    for item in items:
        requests.append(
            GenerationRequest(
                prompt=_render_for(kind, item, registry),
                model=params.model_for(kind),
                temperature=params.temperature,
                max_tokens=params.max_tokens,
            )
        )
    responses = generate_many(provider, requests, max_inflight=params.max_inflight)

    parsed: dict[int, tuple[str, str]] = {}
    retry_idx: list[int] = []
    for i, response in enumerate(responses):
        if isinstance(response, Exception):
            report.drops[f"{kind}:provider_error"] += 1
            continue
        try:
            parsed[i] = parse_qa_response(response.text)
        except ResponseParseError:
            retry_idx.append(i)
    if retry_idx:
        retries = [
            GenerationRequest(
                prompt=requests[i].prompt + STRICT_FORMAT_SUFFIX,
                model=requests[i].model,
                temperature=requests[i].temperature,
                max_tokens=requests[i].max_tokens,
            )
            for i in retry_idx
        ]
        retry_responses = generate_many(provider, retries, max_inflight=params.max_inflight)
        for i, response in zip(retry_idx, retry_responses):
            if isinstance(response, Exception):
                report.drops[f"{kind}:provider_error"] += 1
                continue
            try:
                parsed[i] = parse_qa_response(response.text)
            except ResponseParseError:
                report.drops[f"{kind}:parse_error"] += 1

    pairs: list[QaPair] = []
    for i in sorted(parsed):
        item = items[i]
        question, answer = parsed[i]
        if kind in ("update", "locality"):
            answer = _source_triplet(item).object.label  # type: ignore[arg-type]
        pair = _build_pair(kind, item, question, answer, timestep_id)
        source: Union[Triplet, MhopQuintuple]
        source = item if isinstance(item, MhopQuintuple) else _source_triplet(item)  # type: ignore[arg-type]
        verdict = validate_qa(pair, source)
        if verdict.passed:
            pairs.append(pair)
        else:
            for reason in verdict.reasons:
                report.drops[f"{kind}:validation:{reason}"] += 1
    report.record_kind(kind, len(items), len(parsed), len(pairs))
    pairs.sort(key=lambda p: p.id)
    return pairs


def _generate_restyled_kind(
    kind: str,
    parents: Sequence[QaPair],
    sources: dict[str, Triplet],
    provider: GenerationProvider,
    params: ForgeParams,
    report: ForgeReport,
) -> list[QaPair]:
    registry = params.registry()
    personas: list[Optional[PersonaSpec]] = []
    requests = []
    for parent in parents:
        persona = pick_persona(params.seed, parent.id) if kind == "persona" else None
        personas.append(persona)
        template_id = "persona" if persona else "rephrase"
        requests.append(
            GenerationRequest(
                prompt=render_prompt(
                    template_id,
                    parent,
                    persona_description=persona.description if persona else "",
                    registry=registry,
                ),
                model=params.model_for(kind),
                temperature=params.temperature,
                max_tokens=params.max_tokens,
            )
        )
    responses = generate_many(provider, requests, max_inflight=params.max_inflight)

    questions: dict[int, str] = {}
    retry_idx: list[int] = []
    for i, response in enumerate(responses):
        if isinstance(response, Exception):
            report.drops[f"{kind}:provider_error"] += 1
            continue
        try:
            question = parse_reformulated(response.text)
        except ResponseParseError:
            report.drops[f"{kind}:parse_error"] += 1
            continue
        if question.strip().casefold() == parents[i].question.strip().casefold():
            retry_idx.append(i)
        else:
            questions[i] = question
    if retry_idx:
        retries = [
            GenerationRequest(
                prompt=requests[i].prompt + VARIATION_SUFFIX,
                model=requests[i].model,
                temperature=requests[i].temperature,
                max_tokens=requests[i].max_tokens,
            )
            for i in retry_idx
        ]
        retry_responses = generate_many(provider, retries, max_inflight=params.max_inflight)
        for i, response in zip(retry_idx, retry_responses):
            if isinstance(response, Exception):
                report.drops[f"{kind}:provider_error"] += 1
                continue
            try:
                question = parse_reformulated(response.text)
            except ResponseParseError:
                report.drops[f"{kind}:parse_error"] += 1
                continue
            if question.strip().casefold() == parents[i].question.strip().casefold():
                report.drops[f"{kind}:identical"] += 1
            else:
                questions[i] = question

    pairs: list[QaPair] = []
    for i in sorted(questions):
        parent = parents[i]
        persona = personas[i]
        prefix = "pe" if kind == "persona" else "re"
        pair = QaPair(
            id=f"{prefix}:{parent.provenance[0]}" if parent.provenance else f"{prefix}:{parent.id}",
            kind=kind,
            question=questions[i],
            answer=parent.answer,
            timestep_id=parent.timestep_id,
            provenance=parent.provenance,
            subject=parent.subject,
            relation=parent.relation,
            object=parent.object,
            persona=persona.name if persona else None,
            parent_id=parent.id,
        )
        source = sources.get(parent.provenance[0]) if parent.provenance else None
        if source is None:
            report.drops[f"{kind}:missing_source"] += 1
            continue
        verdict = validate_qa(pair, source)
        if verdict.passed:
            pairs.append(pair)
        else:
            for reason in verdict.reasons:
                report.drops[f"{kind}:validation:{reason}"] += 1
    report.record_kind(kind, len(parents), len(questions), len(pairs))
    pairs.sort(key=lambda p: p.id)
    return pairs


def forge_timestep(
    changed: Sequence[ChangedTriplet],
    locality_probes: Sequence[LocalityProbe],
    mhop_tuples: Sequence[MhopQuintuple],
    provider: GenerationProvider,
    params: Optional[ForgeParams] = None,
    timestep_id: str = "",
) -> tuple[dict[str, list[QaPair]], ForgeReport]:
    """Synthesize and validate all five QA families for one timestep.

    Multi-hop tuples are restricted to those whose constituent update
    pairs survived validation, so every mhop provenance id resolves
    within the emitted update set.
    """
    params = params or ForgeParams()
    report = ForgeReport()
    sources = {c.uid: c.triplet for c in changed}

    update_pairs = _generate_fact_kind(
        "update", list(changed), provider, params, timestep_id, report
    )
    locality_pairs = _generate_fact_kind(
        "locality", list(locality_probes), provider, params, timestep_id, report
    )

    surviving = {pair.provenance[0] for pair in update_pairs}
    eligible_mhops = [
        q for q in mhop_tuples if q.first_id in surviving and q.second_id in surviving
    ]
    report.drops["mhop:missing_parent"] += len(mhop_tuples) - len(eligible_mhops)
    mhop_pairs = _generate_fact_kind(
        "mhop", eligible_mhops, provider, params, timestep_id, report
    )

    rephrase_pairs = _generate_restyled_kind(
        "rephrase", update_pairs, sources, provider, params, report
    )
    persona_pairs = _generate_restyled_kind(
        "persona", update_pairs, sources, provider, params, report
    )

    sets = {
        "update": update_pairs,
        "locality": locality_pairs,
        "rephrase": rephrase_pairs,
        "persona": persona_pairs,
        "mhop": mhop_pairs,
    }
    return sets, report
