import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bugsolve.corpus import (
    CorpusIOError,
    CorpusSplit,
    Example,
    ParseError,
    RecordValidationError,
    SchemaError,
    read_jsonl,
    read_split,
    write_jsonl,
)
from factories import example, mid_discussion, raw_utt


@pytest.fixture
def three():
    return [
        example("o/r#1", "Crash on save", [("a", "It crashes."), ("b", "Null pointer in writer.")], 2, "Guard writer"),
        example("o/r#2", "Slow load", [("a", "Loading takes ages.")], 1, "Cache index"),
        example("o/r#3", "Bad\nlayout", [("a", "Line one\nline two"), ("c", "ok")], 1, "Fix grid gap"),
    ]


def test_empty_write(tmp_path):
    path = tmp_path / "e.jsonl"
    assert write_jsonl([], path) == 0
    assert path.read_text() == ""
    assert read_jsonl(path, "example") == []


def test_round_trip(tmp_path, three):
    path = tmp_path / "c.jsonl"
    assert write_jsonl(three, path) == 3
    assert len(path.read_text().splitlines()) == 3
    assert read_jsonl(path, "example") == three
    assert read_jsonl(path, Example) == three


def test_field_names_are_fixed(tmp_path, three):
    path = tmp_path / "c.jsonl"
    write_jsonl(three[:1], path)
    rec = json.loads(path.read_text())
    assert set(rec) == {"id", "project", "title_tokens", "utterances", "t_g", "description_tokens", "description_source", "resolution_ts"}
    assert set(rec["utterances"][0]) == {"t", "author", "ts", "tokens", "sentences"}


def test_timeline_round_trip_with_multiline_text(tmp_path):
    tl = mid_discussion()
    path = tmp_path / "t.jsonl"
    write_jsonl([tl], path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    # independent parser sees the raw newline inside the string
    assert "\n" in json.loads(lines[0])["events"][2]["text"]
    assert read_jsonl(path, "timeline") == [tl]
    assert set(json.loads(lines[0])) == {"project", "issue_number", "title", "labels", "state", "events"}


def test_tg_greater_than_T_rejected_with_line(tmp_path, three):
    path = tmp_path / "c.jsonl"
    write_jsonl(three, path)
    lines = path.read_text().splitlines()
    bad = json.loads(lines[1])
    bad["t_g"] = 5
    lines[1] = json.dumps(bad)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordValidationError) as err:
        read_jsonl(path, "example")
    assert err.value.line == 2
    assert "t_g ≤ T" in str(err.value)


def test_truncated_final_line(tmp_path, three):
    path = tmp_path / "c.jsonl"
    write_jsonl(three, path)
    text = path.read_text().rstrip("\n")
    path.write_text(text[:-15])
    with pytest.raises(ParseError) as err:
        read_jsonl(path, "example")
    assert err.value.line == 3


def test_duplicate_ids_rejected(tmp_path, three):
    path = tmp_path / "c.jsonl"
    write_jsonl([three[0], three[1], three[0]], path)
    with pytest.raises(RecordValidationError, match="duplicate"):
        read_jsonl(path, "example")


def test_unwritable_path(tmp_path, three):
    with pytest.raises(CorpusIOError) as err:
        write_jsonl(three, tmp_path / "missing" / "x.jsonl")
    assert "missing" in str(err.value)


def test_missing_file(tmp_path):
    with pytest.raises(CorpusIOError):
        read_jsonl(tmp_path / "nope.jsonl", "example")


def test_unserializable_names_field(tmp_path):
    with pytest.raises(SchemaError) as err:
        write_jsonl([{"id": "x", "payload": {"bad": object()}}], tmp_path / "x.jsonl")
    assert "payload.bad" in str(err.value)


def test_invariants_enforced_at_construction():
    u = raw_utt(1, "a", [["x"]])
    with pytest.raises(ValueError):
        Example(id="o/r#1", project="o/r", title_tokens=("t",), utterances=(u,), t_g=2,
                description_tokens=("d",), description_source="pr_title", resolution_ts=u.timestamp)
    with pytest.raises(ValueError):
        Example(id="o/r#1", project="o/r", title_tokens=(), utterances=(u,), t_g=1,
                description_tokens=("d",), description_source="pr_title", resolution_ts=u.timestamp)
    with pytest.raises(ValueError):
        Example(id="o/r#1", project="o/r", title_tokens=("t",), utterances=(u,), t_g=1,
                description_tokens=("d",), description_source="pr_title", resolution_ts=u.timestamp - 1)
    with pytest.raises(ValueError):
        raw_utt(1, "a", [[]])


def test_split_disjoint_and_read(tmp_path):
    with pytest.raises(ValueError):
        CorpusSplit(train=("a",), valid=("a",), test=())
    path = tmp_path / "s.jsonl"
    write_jsonl([CorpusSplit(train=("a", "b"), valid=("c",), test=("d",))], path)
    assert read_split(path).valid == ("c",)


token = st.text(alphabet="abcxyz01", min_size=1, max_size=5)


@settings(max_examples=50, deadline=None)
@given(
    sents=st.lists(st.lists(token, min_size=1, max_size=4), min_size=1, max_size=3),
    title=st.lists(token, min_size=1, max_size=4),
    desc=st.lists(token, min_size=1, max_size=4),
)
def test_round_trip_property(tmp_path_factory, sents, title, desc):
    u = raw_utt(1, "a", sents)
    ex = Example(id="o/r#9", project="o/r", title_tokens=tuple(title), utterances=(u,), t_g=1,
                 description_tokens=tuple(desc), description_source="commit_message", resolution_ts=u.timestamp)
    path = tmp_path_factory.mktemp("rt") / "x.jsonl"
    write_jsonl([ex], path)
    assert read_jsonl(path, "example") == [ex]
