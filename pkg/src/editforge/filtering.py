"""Quality filters for triplet sets, with per-rule removal accounting.

Rules run in a fixed order and removals are attributed to the first
matching rule, so report counts always reconcile to the input size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, TypeVar, Union

from editforge.models import ChangedTriplet, Triplet

ItemT = TypeVar("ItemT", bound=Union[Triplet, ChangedTriplet])

# Unicode ranges admitted per configurable repertoire name.
_SCRIPT_RANGES: dict[str, tuple[tuple[int, int], ...]] = {
    "basic-latin": ((0x20, 0x7E),),
    "latin-1": ((0xA0, 0xFF),),
    "latin-ext-a": ((0x100, 0x17F),),
    "latin-ext-b": ((0x180, 0x24F),),
    "punctuation": ((0x2013, 0x2014), (0x2018, 0x2019), (0x201C, 0x201D),
                    (0x2026, 0x2026), (0x2032, 0x2033)),
}

RULE_ORDER = (
    "circular",
    "non_roman",
    "single_char",
    "long_phrase",
    "non_entity",
    "unresolved",
)


@dataclass
class FilterConfig:
    max_phrase_words: int = 5
    allow_scripts: tuple[str, ...] = tuple(_SCRIPT_RANGES)
    enabled: tuple[str, ...] = RULE_ORDER


@dataclass
class FilterReport:
    input_count: int = 0
    kept_count: int = 0
    removed_by_rule: dict[str, int] = field(default_factory=dict)

    @property
    def removed_count(self) -> int:
        return sum(self.removed_by_rule.values())

    def reconciles(self) -> bool:
        return self.input_count == self.kept_count + self.removed_count

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "removed_by_rule": dict(sorted(self.removed_by_rule.items())),
        }


def _as_triplet(item: Union[Triplet, ChangedTriplet]) -> Triplet:
    return item.triplet if isinstance(item, ChangedTriplet) else item


def _allowed_char(ch: str, ranges: Sequence[tuple[int, int]]) -> bool:
    if ch.isspace():
        return True
    point = ord(ch)
    return any(lo <= point <= hi for lo, hi in ranges)


def _rule_circular(t: Triplet, config: FilterConfig) -> bool:
    obj = t.object
    if obj.entity is not None and obj.entity.id == t.subject.id:
        return True
    s_label, o_label = t.subject.label, obj.label
    return bool(s_label) and bool(o_label) and s_label.casefold() == o_label.casefold()


def _rule_non_roman(t: Triplet, config: FilterConfig) -> bool:
    ranges = [r for name in config.allow_scripts for r in _SCRIPT_RANGES.get(name, ())]
    for label in (t.subject.label, t.object.label):
        if any(not _allowed_char(ch, ranges) for ch in label):
            return True
    return False


def _rule_single_char(t: Triplet, config: FilterConfig) -> bool:
    return any(len(label.strip()) == 1 for label in (t.subject.label, t.object.label))


def _rule_long_phrase(t: Triplet, config: FilterConfig) -> bool:
    limit = config.max_phrase_words
    return any(
        len(label.split()) > limit for label in (t.subject.label, t.object.label)
    )


def _rule_non_entity(t: Triplet, config: FilterConfig) -> bool:
    return not t.object.is_entity


def _rule_unresolved(t: Triplet, config: FilterConfig) -> bool:
    return t.unresolved


_RULES = {
    "circular": _rule_circular,
    "non_roman": _rule_non_roman,
    "single_char": _rule_single_char,
    "long_phrase": _rule_long_phrase,
    "non_entity": _rule_non_entity,
    "unresolved": _rule_unresolved,
}


def apply_filters(
    items: Iterable[ItemT], rules: FilterConfig | None = None
) -> tuple[list[ItemT], FilterReport]:
    """Run the quality rules over triplets (or changed triplets).

    Returns the kept items in input order and a report attributing each
    removal to the first rule that matched.
    """
    config = rules or FilterConfig()
    active = [name for name in RULE_ORDER if name in config.enabled]
    kept: list[ItemT] = []
    report = FilterReport()
    for item in items:
        report.input_count += 1
        triplet = _as_triplet(item)
        for name in active:
            if _RULES[name](triplet, config):
                report.removed_by_rule[name] = report.removed_by_rule.get(name, 0) + 1
                break
        else:
            kept.append(item)
    report.kept_count = len(kept)
    return kept, report


def drop_ambiguous(items: Iterable[ItemT]) -> tuple[list[ItemT], FilterReport]:
    """Remove every triplet whose (subject, relation) key maps to more
    than one distinct object within the input collection."""
    items = list(items)
    objects_by_key: dict[tuple[str, str], set[str]] = {}
    for item in items:
        t = _as_triplet(item)
        objects_by_key.setdefault(t.key, set()).add(t.object.key)
    kept: list[ItemT] = []
    report = FilterReport(input_count=len(items))
    for item in items:
        if len(objects_by_key[_as_triplet(item).key]) > 1:
            report.removed_by_rule["ambiguous_key"] = (
                report.removed_by_rule.get("ambiguous_key", 0) + 1
            )
        else:
            kept.append(item)
    report.kept_count = len(kept)
    return kept, report
