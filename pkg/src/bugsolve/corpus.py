"""Domain records and line-delimited JSON persistence.

Every record type is an immutable pydantic model whose invariants are checked
at construction, so a value that exists is a valid value. Field aliases carry
the fixed on-disk names (``ts``, ``t``, ``resolution_ts`` ...).
"""
from __future__ import annotations

import json
import os
from collections.abc import Iterable, Sequence
from typing import Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class CorpusError(Exception):
    """Base class for persistence and validation failures."""


class ParseError(CorpusError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: parse error: {message}")
        self.path = path
        self.line = line


class RecordValidationError(CorpusError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: validation error: {message}")
        self.path = path
        self.line = line


class SchemaError(CorpusError):
    """A record could not be serialized; ``field`` names the offending path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"field {field!r}: {message}")
        self.field = field


class CorpusIOError(CorpusError, OSError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class Record(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    def to_json(self) -> dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


class Event(Record):
    kind: Literal["comment", "commit", "pull_request", "other"]
    actor: str
    timestamp: int = Field(alias="ts", gt=0)
    text: str = ""
    linked_issues: tuple[str, ...] = ()


class RawTimeline(Record):
    project: str = Field(pattern=r"^[^/\s]+/[^/\s]+$")
    issue_number: int = Field(gt=0)
    title_raw: str = Field(alias="title")
    labels: tuple[str, ...] = ()
    state: Literal["open", "closed"]
    events: tuple[Event, ...] = ()

    @field_validator("events")
    @classmethod
    def _sorted(cls, events: tuple[Event, ...]) -> tuple[Event, ...]:
        for prev, cur in zip(events, events[1:]):
            if cur.timestamp < prev.timestamp:
                raise ValueError("events must be sorted non-decreasing by timestamp")
        return events

    @property
    def key(self) -> str:
        return f"{self.project}#{self.issue_number}"


class Utterance(Record):
    index_t: int = Field(alias="t", ge=1)
    author: str
    timestamp: int = Field(alias="ts", gt=0)
    tokens: tuple[str, ...]
    sentences: tuple[tuple[int, int], ...]

    @model_validator(mode="after")
    def _check(self) -> Utterance:
        if not self.tokens:
            raise ValueError("utterance tokens must be non-empty")
        pos = 0
        for start, end in self.sentences:
            if start != pos or end <= start:
                raise ValueError("sentence spans must tile the token list without gaps")
            pos = end
        if pos != len(self.tokens):
            raise ValueError("sentence spans must cover every token")
        return self

    def sentence_tokens(self) -> list[tuple[str, ...]]:
        return [self.tokens[s:e] for s, e in self.sentences]


class Example(Record):
    id: str
    project: str
    title_tokens: tuple[str, ...]
    utterances: tuple[Utterance, ...]
    t_g: int
    description_tokens: tuple[str, ...]
    description_source: Literal["commit_message", "pr_title"]
    resolution_timestamp: int = Field(alias="resolution_ts")

    @model_validator(mode="after")
    def _check(self) -> Example:
        T = len(self.utterances)
        if not self.title_tokens:
            raise ValueError("title_tokens must be non-empty")
        if not self.description_tokens:
            raise ValueError("description_tokens must be non-empty")
        for i, u in enumerate(self.utterances, start=1):
            if u.index_t != i:
                raise ValueError("utterance indices must be consecutive starting at 1")
        if not 1 <= self.t_g:
            raise ValueError(f"1 ≤ t_g violated (t_g={self.t_g})")
        if self.t_g > T:
            raise ValueError(f"t_g ≤ T violated (t_g={self.t_g}, T={T})")
        if self.resolution_timestamp < self.utterances[self.t_g - 1].timestamp:
            raise ValueError("resolution_ts must not precede utterance t_g")
        return self

    @property
    def T(self) -> int:
        return len(self.utterances)


class CorpusSplit(Record):
    train: tuple[str, ...]
    valid: tuple[str, ...]
    test: tuple[str, ...]

    @model_validator(mode="after")
    def _disjoint(self) -> CorpusSplit:
        seen: set[str] = set()
        for part in (self.train, self.valid, self.test):
            if seen.intersection(part) or len(set(part)) != len(part):
                raise ValueError("split lists must be pairwise disjoint")
            seen.update(part)
        return self


def example_id(project: str, issue_number: int) -> str:
    return f"{project}#{issue_number}"


def _schemas() -> dict[str, type[Record]]:
    from bugsolve.filters import FilterReport
    from bugsolve.generators import GeneratorOutput
    from bugsolve.when.predict import WhenPrediction

    return {
        "timeline": RawTimeline,
        "example": Example,
        "split": CorpusSplit,
        "filter_report": FilterReport,
        "generator_output": GeneratorOutput,
        "when_prediction": WhenPrediction,
    }


def _find_unserializable(obj: Any, path: str = "") -> str:
    if isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                return f"{path}.{k!r}".lstrip(".")
            bad = _find_unserializable(v, f"{path}.{k}")
            if bad:
                return bad
        return ""
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            bad = _find_unserializable(v, f"{path}[{i}]")
            if bad:
                return bad
        return ""
    try:
        json.dumps(obj)
    except (TypeError, ValueError):
        return path.lstrip(".") or "<record>"
    return ""


def _to_line(record: Any) -> str:
    if isinstance(record, BaseModel):
        payload = record.model_dump(mode="json", by_alias=True)
    else:
        payload = record
    try:
        return json.dumps(payload, ensure_ascii=False)
    except (TypeError, ValueError) as exc:
        raise SchemaError(_find_unserializable(payload), str(exc)) from exc


def write_jsonl(records: Iterable[Any], path: str | os.PathLike) -> int:
    """Write one JSON object per line; returns the number of records written."""
    lines = [_to_line(r) for r in records]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise CorpusIOError(os.fspath(path), exc.strerror or str(exc)) from exc
    return len(lines)


Schema = Union[str, type[Record]]


def read_jsonl(path: str | os.PathLike, schema: Schema) -> list[Any]:
    """Read and validate a JSONL file.

    ``schema`` is a record class or one of the registered kinds: ``timeline``,
    ``example``, ``split``, ``filter_report``, ``generator_output``,
    ``when_prediction``. Failures carry the 1-based line number.
    """
    model = _schemas()[schema] if isinstance(schema, str) else schema
    spath = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw_lines = fh.read().split("\n")
    except OSError as exc:
        raise CorpusIOError(spath, exc.strerror or str(exc)) from exc
    if raw_lines and raw_lines[-1] == "":
        raw_lines.pop()

    out: list[Any] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(spath, lineno, exc.msg) from exc
        try:
            rec = model.model_validate(payload)
        except ValidationError as exc:
            raise RecordValidationError(spath, lineno, _summarize(exc)) from exc
        key = getattr(rec, "id", None)
        if key is None and isinstance(rec, RawTimeline):
            key = rec.key
        if key is not None:
            if key in seen:
                raise RecordValidationError(
                    spath, lineno, f"duplicate id {key!r} (first seen at line {seen[key]})"
                )
            seen[key] = lineno
        out.append(rec)
    return out


def _summarize(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(parts)


def read_split(path: str | os.PathLike) -> CorpusSplit:
    records = read_jsonl(path, CorpusSplit)
    if len(records) != 1:
        raise RecordValidationError(os.fspath(path), max(len(records), 1), "expected exactly one split record")
    return records[0]


def index_by_id(examples: Sequence[Example]) -> dict[str, Example]:
    return {ex.id: ex for ex in examples}
