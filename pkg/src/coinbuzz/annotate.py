"""Stand-off annotation pipeline: tokenizer, gazetteer lookup, span queries.

Document text is immutable; every annotator attaches typed spans with feature
maps instead of rewriting the text, so overlapping layers coexist and the
result can be traversed like a graph of spans. Offsets are Unicode scalar
indices (plain str indices), which survive re-serialization across encodings.

Stages are registered by name and declare the annotation types they need and
produce; run_pipeline checks the ordering and owns annotation id assignment,
handing out dense integers in stage order so identical inputs always yield
identical ids. Part-of-speech tagging and transducer grammars are future
stages behind the same interface; nothing downstream consumes them today.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from coinbuzz.message import Message

TOKEN = "Token"
HASHTAG = "Hashtag"
MENTION = "Mention"
URL = "URL"
LOOKUP = "Lookup"
ENTITY = "Entity"

TOKEN_TYPES = (TOKEN, HASHTAG, MENTION, URL)

# One match per non-whitespace atom, tried in order: URLs before plain runs
# so scheme letters are not eaten as a Token, then #/@ forms, then
# alphanumeric runs, then any leftover character as one-char punctuation.
_SCAN_RE = re.compile(
    r"(?P<url>[A-Za-z][A-Za-z0-9+.-]*://\S*)"
    r"|(?P<hashtag>\#[^\W_]+)"
    r"|(?P<mention>@[^\W_]+)"
    r"|(?P<token>[^\W_]+)"
    r"|(?P<punct>\S)",
    re.UNICODE,
)

_GROUP_TYPE = {"url": URL, "hashtag": HASHTAG, "mention": MENTION, "token": TOKEN, "punct": TOKEN}


class UnknownStage(Exception):
    """Pipeline references a stage name that is not registered."""


class StageDependencyViolation(Exception):
    """A stage's required annotation types are not produced earlier."""


@dataclass(frozen=True, slots=True)
class Document:
    doc_id: str
    text: str
    source: Message | None = None


@dataclass(slots=True)
class Annotation:
    ann_id: int
    type: str
    start: int
    end: int
    features: dict[str, str] = field(default_factory=dict)


class AnnotatedDocument:
    """A document plus its stand-off annotations, queryable by type and span."""

    def __init__(self, doc: Document):
        self.doc = doc
        self.annotations: list[Annotation] = []

    def add(self, type: str, start: int, end: int, features: dict[str, str] | None = None) -> Annotation:
        if not (0 <= start <= end <= len(self.doc.text)):
            raise ValueError(f"span [{start},{end}) outside text of length {len(self.doc.text)}")
        ann = Annotation(len(self.annotations), type, start, end, features or {})
        self.annotations.append(ann)
        return ann

    def covered_text(self, ann: Annotation) -> str:
        return self.doc.text[ann.start:ann.end]

    def annotations_in(
        self,
        types: Iterable[str] | None = None,
        window: tuple[int, int] | None = None,
    ) -> list[Annotation]:
        """Annotations of the given types overlapping the window.

        Half-open spans: [s,e) overlaps [a,b) when s < b and a < e. A
        zero-width window at p counts as inside span [s,e) when s <= p < e.
        Results are ordered by (start, end, ann_id).
        """
        wanted = set(types) if types is not None else None
        if window is not None:
            a, b = window
            if not (0 <= a <= b <= len(self.doc.text)):
                raise ValueError(f"window [{a},{b}) outside text")
        out = []
        for ann in self.annotations:
            if wanted is not None and ann.type not in wanted:
                continue
            if window is not None:
                if a == b:
                    if not (ann.start <= a < ann.end):
                        continue
                elif not (ann.start < b and a < ann.end):
                    continue
            out.append(ann)
        out.sort(key=lambda ann: (ann.start, ann.end, ann.ann_id))
        return out

    def to_json(self) -> str:
        record = {
            "doc_id": self.doc.doc_id,
            "text": self.doc.text,
            "annotations": [
                {
                    "id": ann.ann_id,
                    "type": ann.type,
                    "start": ann.start,
                    "end": ann.end,
                    "features": ann.features,
                }
                for ann in self.annotations
            ],
        }
        return json.dumps(record, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: str) -> "AnnotatedDocument":
        record = json.loads(payload)
        adoc = cls(Document(record["doc_id"], record["text"]))
        for item in record["annotations"]:
            ann = adoc.add(item["type"], item["start"], item["end"], dict(item["features"]))
            if ann.ann_id != item["id"]:
                raise ValueError(f"non-dense annotation id {item['id']}")
        return adoc


def token_spans(text: str) -> Iterable[tuple[str, int, int]]:
    """Yield (type, start, end) for every non-whitespace atom, left to right."""
    for match in _SCAN_RE.finditer(text):
        yield _GROUP_TYPE[match.lastgroup], match.start(), match.end()


def tokenize(doc: Document) -> list[Annotation]:
    """Segment the text into Token/Hashtag/Mention/URL annotations.

    The spans are disjoint and together cover exactly the non-whitespace
    positions of the text.
    """
    return [
        Annotation(i, type, start, end)
        for i, (type, start, end) in enumerate(token_spans(doc.text))
    ]


@dataclass
class Gazetteer:
    """Case-insensitive surface-form lookup with entity categories.

    File format: one entry per line, `surface<TAB>major<TAB>minor`.
    """

    entries: dict[str, tuple[str, str]]
    max_tokens: int = 1

    @classmethod
    def from_entries(cls, entries: Mapping[str, tuple[str, str]]) -> "Gazetteer":
        normalized = {}
        max_tokens = 1
        for surface, (major, minor) in entries.items():
            surface = surface.lower()
            if not surface:
                raise ValueError("empty gazetteer surface form")
            normalized[surface] = (major, minor)
            max_tokens = max(max_tokens, sum(1 for _ in token_spans(surface)))
        return cls(normalized, max_tokens)

    @classmethod
    def load(cls, path: str | Path) -> "Gazetteer":
        entries = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{line_no}: expected surface<TAB>major<TAB>minor")
                entries[parts[0]] = (parts[1], parts[2])
        return cls.from_entries(entries)


def gazetteer_lookup(doc: Document, tokens: Sequence[Annotation], gazetteer: Gazetteer) -> list[Annotation]:
    """One Lookup per maximal gazetteer match over consecutive tokens.

    Candidate surfaces are the raw document text spanning the token run,
    lowercased. Longest match wins; ties break leftmost; matched tokens are
    consumed so lookups never overlap.
    """
    text = doc.text.lower()
    lookups: list[Annotation] = []
    i = 0
    n = len(tokens)
    while i < n:
        matched_j = -1
        for j in range(min(i + gazetteer.max_tokens, n) - 1, i - 1, -1):
            surface = text[tokens[i].start:tokens[j].end]
            if surface in gazetteer.entries:
                matched_j = j
                break
        if matched_j < 0:
            i += 1
            continue
        major, minor = gazetteer.entries[text[tokens[i].start:tokens[matched_j].end]]
        lookups.append(
            Annotation(
                len(lookups),
                LOOKUP,
                tokens[i].start,
                tokens[matched_j].end,
                {"major_type": major, "minor_type": minor},
            )
        )
        i = matched_j + 1
    return lookups


# --- stage registry ---------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    name: str
    requires: frozenset[str]
    produces: frozenset[str]
    run: Callable[[AnnotatedDocument, Mapping[str, object]], None]


def _run_tokenize(adoc: AnnotatedDocument, resources: Mapping[str, object]) -> None:
    for type, start, end in token_spans(adoc.doc.text):
        adoc.add(type, start, end)


def _run_gazetteer(adoc: AnnotatedDocument, resources: Mapping[str, object]) -> None:
    gazetteer = resources.get("gazetteer")
    if not isinstance(gazetteer, Gazetteer):
        raise ValueError("gazetteer stage needs a 'gazetteer' resource")
    tokens = adoc.annotations_in(TOKEN_TYPES)
    for ann in gazetteer_lookup(adoc.doc, tokens, gazetteer):
        adoc.add(ann.type, ann.start, ann.end, ann.features)


_STAGES: dict[str, Stage] = {}


def register_stage(
    name: str,
    requires: Iterable[str],
    produces: Iterable[str],
    run: Callable[[AnnotatedDocument, Mapping[str, object]], None],
) -> None:
    _STAGES[name] = Stage(name, frozenset(requires), frozenset(produces), run)


register_stage("tokenize", (), TOKEN_TYPES, _run_tokenize)
register_stage("gazetteer", (TOKEN,), (LOOKUP,), _run_gazetteer)


def validate_pipeline(stages: Sequence[str]) -> None:
    available: set[str] = set()
    for name in stages:
        stage = _STAGES.get(name)
        if stage is None:
            raise UnknownStage(name)
        missing = stage.requires - available
        if missing:
            raise StageDependencyViolation(
                f"stage {name!r} needs {sorted(missing)} produced earlier"
            )
        available |= stage.produces


def run_pipeline(
    doc: Document,
    stages: Sequence[str],
    resources: Mapping[str, object] | None = None,
) -> AnnotatedDocument:
    """Apply stages in order over the document; deterministic for fixed inputs."""
    validate_pipeline(stages)
    adoc = AnnotatedDocument(doc)
    for name in stages:
        _STAGES[name].run(adoc, resources or {})
    return adoc
