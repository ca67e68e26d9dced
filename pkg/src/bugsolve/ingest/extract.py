"""Turn issue timelines into Examples or a single rejection reason."""
from __future__ import annotations

import re
from collections import Counter
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

from bugsolve.corpus import Event, Example, RawTimeline, Record, Utterance, example_id
from bugsolve.preprocess import (
    DEFAULT_CONFIG,
    TokenizerConfig,
    clean_description,
    preprocess_utterance,
    strip_markup,
    tokenize,
)
from bugsolve.stopwords import STOPWORDS

DEFAULT_BUG_KEYWORDS = ("fix", "bug", "error", "fail", "repair", "defect", "patch")

RejectCode = Literal[
    "not_bug",
    "not_closed",
    "too_few_actors",
    "no_linked_change",
    "multiple_descriptions",
    "multi_issue_change",
    "description_equals_title",
    "empty_discussion",
    "t_g_out_of_range",
]


@dataclass(frozen=True)
class IngestConfig:
    require_bug_label: bool = True
    bug_commit_keywords: tuple[str, ...] = DEFAULT_BUG_KEYWORDS
    min_actors: int = 2
    require_closed: bool = True
    stopword_list: frozenset[str] = STOPWORDS
    tokenizer: TokenizerConfig = field(default=DEFAULT_CONFIG)

    def __post_init__(self):
        if self.min_actors < 1:
            raise ValueError("min_actors must be >= 1")
        if self.require_bug_label and not self.bug_commit_keywords:
            raise ValueError("bug_commit_keywords must be non-empty")


class RejectReason(Record):
    id: str
    code: RejectCode
    detail: str = ""


_WORD = re.compile(r"[a-z0-9]+")
_REF = re.compile(r"^(?:(?P<repo>[\w.-]+/[\w.-]+))?#(?P<num>\d+)$")
_URL_REF = re.compile(r"github\.com/(?P<repo>[\w.-]+/[\w.-]+)/(?:issues|pull)/(?P<num>\d+)")


def parse_ref(ref: str, project: str) -> tuple[str, int] | None:
    """Resolve ``#12``, ``owner/repo#12`` or an issue URL to (project, number)."""
    ref = ref.strip()
    m = _REF.match(ref) or _URL_REF.search(ref)
    if not m:
        return None
    return (m.group("repo") or project).lower(), int(m.group("num"))


def _is_change(ev: Event) -> bool:
    return ev.kind in ("commit", "pull_request")


def is_bug_report(timeline: RawTimeline, cfg: IngestConfig = IngestConfig()) -> bool:
    if any("bug" in label.lower() for label in timeline.labels):
        return True
    keywords = set(cfg.bug_commit_keywords)
    for ev in timeline.events:
        if _is_change(ev) and keywords.intersection(_WORD.findall(ev.text.lower())):
            return True
    return False


def _description_text(ev: Event) -> str:
    if ev.kind == "commit":
        for line in ev.text.splitlines():
            if line.strip():
                return line
        return ""
    return ev.text


def _equals_title(desc: Sequence[str], title: Sequence[str], stopwords: frozenset[str]) -> bool:
    d = Counter(t for t in desc if t not in stopwords)
    t = Counter(t for t in title if t not in stopwords)
    return not d or d == t


def extract_example(timeline: RawTimeline, cfg: IngestConfig = IngestConfig()) -> Example | RejectReason:
    """Apply the extraction procedure and cleaning heuristics to one timeline.

    Checks run in a fixed order and the first failure is the rejection code:
    not_bug, not_closed, linked-change checks, empty description,
    empty_discussion, too_few_actors, description_equals_title,
    t_g_out_of_range.
    """
    ex_id = example_id(timeline.project, timeline.issue_number)

    def reject(code: RejectCode, detail: str = "") -> RejectReason:
        return RejectReason(id=ex_id, code=code, detail=detail)

    if cfg.require_bug_label and not is_bug_report(timeline, cfg):
        return reject("not_bug")
    if cfg.require_closed and timeline.state != "closed":
        return reject("not_closed")

    own = (timeline.project.lower(), timeline.issue_number)
    linked: list[tuple[int, Event, set]] = []
    skipped = 0
    for pos, ev in enumerate(timeline.events):
        if not _is_change(ev):
            continue
        refs = {r for r in (parse_ref(x, timeline.project) for x in ev.linked_issues) if r}
        if refs and own not in refs:
            skipped += 1
            continue
        linked.append((pos, ev, refs))
    if not linked:
        detail = f"{skipped} change(s) reference other issues or repositories only" if skipped else ""
        return reject("no_linked_change", detail)
    if len(linked) > 1:
        return reject("multiple_descriptions", f"{len(linked)} linked changes")
    _, change, refs = linked[0]
    if refs - {own}:
        return reject("multi_issue_change", ", ".join(sorted(f"{p}#{n}" for p, n in refs - {own})))

    desc = clean_description(_description_text(change), cfg.tokenizer)
    if not desc:
        return reject("no_linked_change", "description empty after cleaning")
    title = tokenize(strip_markup(timeline.title_raw), cfg.tokenizer)

    utterances: list[Utterance] = []
    t_g = 0
    for pos, ev in enumerate(timeline.events):
        if ev.kind != "comment":
            continue
        tokens, spans = preprocess_utterance(ev.text, cfg.tokenizer)
        if not tokens:
            continue
        utterances.append(
            Utterance(
                index_t=len(utterances) + 1,
                author=ev.actor,
                timestamp=ev.timestamp,
                tokens=tuple(tokens),
                sentences=tuple(spans),
            )
        )
        # a comment sharing the change's timestamp does not count as preceding it
        if ev.timestamp < change.timestamp:
            t_g = len(utterances)
    if not utterances:
        return reject("empty_discussion", "no utterance survives preprocessing")
    if not title:
        return reject("empty_discussion", "title empty after preprocessing")

    actors = {u.author for u in utterances} | {change.actor}
    if len(actors) < cfg.min_actors:
        return reject("too_few_actors", f"{len(actors)} distinct actor(s)")
    if _equals_title(desc, title, cfg.stopword_list):
        return reject("description_equals_title")
    if t_g < 1:
        return reject("t_g_out_of_range", "no utterance precedes the change")

    return Example(
        id=ex_id,
        project=timeline.project,
        title_tokens=tuple(title),
        utterances=tuple(utterances),
        t_g=t_g,
        description_tokens=tuple(desc),
        description_source="commit_message" if change.kind == "commit" else "pr_title",
        resolution_timestamp=change.timestamp,
    )


def extract_all(
    timelines: Iterable[RawTimeline], cfg: IngestConfig = IngestConfig(), threads: int = 1
) -> tuple[list[Example], list[RejectReason]]:
    """Map extract_example over timelines; both outputs are sorted by id."""
    timelines = list(timelines)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda tl: extract_example(tl, cfg), timelines))
    else:
        results = [extract_example(tl, cfg) for tl in timelines]
    examples = sorted((r for r in results if isinstance(r, Example)), key=lambda e: e.id)
    rejects = sorted((r for r in results if isinstance(r, RejectReason)), key=lambda r: r.id)
    return examples, rejects


def reject_histogram(rejects: Iterable[RejectReason]) -> dict[str, int]:
    return dict(sorted(Counter(r.code for r in rejects).items()))


def discussion_utterances(timeline: RawTimeline, cfg: TokenizerConfig = DEFAULT_CONFIG) -> list[Utterance]:
    """Preprocessed comment turns of any timeline (used for non-bug augmentation)."""
    out: list[Utterance] = []
    for ev in timeline.events:
        if ev.kind != "comment":
            continue
        tokens, spans = preprocess_utterance(ev.text, cfg)
        if tokens:
            out.append(
                Utterance(
                    index_t=len(out) + 1,
                    author=ev.actor,
                    timestamp=ev.timestamp,
                    tokens=tuple(tokens),
                    sentences=tuple(spans),
                )
            )
    return out
