"""Text normalization: markup stripping, tokenization, sentence splitting.

The tokenizer is frozen because every downstream metric depends on it:
whitespace split, punctuation as standalone tokens, dotted version strings
(``1.8.2``) kept whole, identifiers subtokenized, then lowercased.
"""
from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass, field

TITLE_START = "<TITLE_START>"
UTTERANCE_START = "<UTTERANCE_START>"


class BoundsError(IndexError):
    pass


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    keep_inline_code: bool = True
    sentence_terminators: frozenset[str] = field(default_factory=lambda: frozenset(".!?"))

    def __post_init__(self):
        if not self.sentence_terminators:
            raise ValueError("sentence_terminators must be non-empty")


DEFAULT_CONFIG = TokenizerConfig()

_FENCE = re.compile(r"(```|~~~).*?(?:\1|\Z)", re.DOTALL)
_URL = re.compile(r"\b[A-Za-z][A-Za-z0-9+.-]*://\S+")
_MENTION = re.compile(r"(?<![\w@])@[A-Za-z0-9][A-Za-z0-9-]*")
_INLINE = re.compile(r"`([^`\n]*)`")
_HSPACE = re.compile(r"[ \t\f\v\xa0]+")
_INDENTED = re.compile(r"^(?: {4}|\t)")


def _drop_indented_blocks(text: str) -> str:
    out: list[str] = []
    in_block = False
    prev_blank = True
    for line in text.split("\n"):
        blank = not line.strip()
        if _INDENTED.match(line) and not blank and (prev_blank or in_block):
            in_block = True
            continue
        if not blank:
            in_block = False
        out.append(line)
        prev_blank = blank
    return "\n".join(out)


def _strip_once(text: str, keep_inline_code: bool) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _FENCE.sub(" ", text)
    text = _drop_indented_blocks(text)
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    text = _INLINE.sub((lambda m: m.group(1)) if keep_inline_code else " ", text)
    text = text.replace("`", " ")
    lines = (_HSPACE.sub(" ", line).strip() for line in text.split("\n"))
    return "\n".join(line for line in lines if line)


def strip_markup(text: str, keep_inline_code: bool = True) -> str:
    """Remove code blocks, URLs and @mentions; unwrap inline code.

    Applied to a fixpoint so the result is idempotent even when a removal
    exposes a new pattern (``@`name``` becomes ``@name`` after unwrapping).
    """
    for _ in range(8):
        stripped = _strip_once(text, keep_inline_code)
        if stripped == text:
            break
        text = stripped
    return text


def _char_class(ch: str) -> str:
    if ch.isdigit():
        return "d"
    if ch.isupper():
        return "u"
    if ch.isalpha():
        return "l"
    return "x"


def subtokenize(token: str, lowercase: bool = True) -> list[str]:
    """Split an identifier into camelCase / snake_case / digit-run pieces.

    >>> subtokenize("HTTPServer2")
    ['http', 'server', '2']
    """
    pieces: list[str] = []
    cur: list[str] = []
    classes = [_char_class(c) for c in token]
    for i, ch in enumerate(token):
        cls = classes[i]
        if cls == "x":
            if cur:
                pieces.append("".join(cur))
                cur = []
            continue
        if cur:
            prev = classes[i - 1]
            nxt = classes[i + 1] if i + 1 < len(token) else ""
            split = (
                (prev == "d") != (cls == "d")
                or (cls == "u" and prev == "l")
                or (cls == "u" and prev == "u" and nxt == "l")
            )
            if split:
                pieces.append("".join(cur))
                cur = []
        cur.append(ch)
    if cur:
        pieces.append("".join(cur))
    return [p.lower() for p in pieces] if lowercase else pieces


_TOKEN = re.compile(r"\d+(?:\.\d+)+|\w+|[^\w\s]")
_VERSION = re.compile(r"\d+(?:\.\d+)+")


def tokenize(text: str, cfg: TokenizerConfig = DEFAULT_CONFIG) -> list[str]:
    tokens: list[str] = []
    for chunk in text.split():
        for m in _TOKEN.finditer(chunk):
            tok = m.group(0)
            if _VERSION.fullmatch(tok):
                tokens.append(tok)
            elif tok[0].isalnum() or tok[0] == "_":
                tokens.extend(subtokenize(tok, lowercase=cfg.lowercase))
            else:
                tokens.append(tok)
    return tokens


def sentence_spans(text: str, cfg: TokenizerConfig = DEFAULT_CONFIG) -> list[tuple[int, int]]:
    """Character spans of sentences; the gaps between spans are whitespace."""
    terms = cfg.sentence_terminators
    n = len(text)
    cuts: list[tuple[int, int]] = []
    start = 0
    for i, ch in enumerate(text):
        end = None
        if ch == "\n":
            end, nxt = i, i + 1
        elif ch in terms and i + 1 < n and text[i + 1].isspace():
            k = i + 1
            while k < n and text[k].isspace() and text[k] != "\n":
                k += 1
            if k == n or text[k].isupper():
                end, nxt = i + 1, i + 1
        if end is not None:
            cuts.append((start, end))
            start = nxt
    cuts.append((start, n))

    spans = []
    for s, e in cuts:
        seg = text[s:e]
        if not seg.strip():
            continue
        lead = len(seg) - len(seg.lstrip())
        trail = len(seg) - len(seg.rstrip())
        spans.append((s + lead, e - trail))
    return spans


def split_sentences(text: str, cfg: TokenizerConfig = DEFAULT_CONFIG) -> list[str]:
    return [text[s:e] for s, e in sentence_spans(text, cfg)]


_CLOSING_REF = re.compile(
    r"\b(?:close[sd]?|fix(?:e[sd])?|resolve[sd]?)\b\s*:?\s*(?:[\w.-]+/[\w.-]+)?#\d+\b",
    re.IGNORECASE,
)
_PAREN_REF = re.compile(r"\(\s*(?:[\w.-]+/[\w.-]+)?#\d+\s*\)")
_GH_REF = re.compile(r"\bGH-\d+\b", re.IGNORECASE)
_HASH_REF = re.compile(r"(?:[\w.-]+/[\w.-]+)?#\d+\b")


def clean_description(text: str, cfg: TokenizerConfig = DEFAULT_CONFIG) -> list[str]:
    """Tokens of a commit message / PR title with issue and PR references removed.

    An empty result means nothing describable is left and the example should
    be rejected.
    """
    text = strip_markup(text, keep_inline_code=cfg.keep_inline_code)
    for pattern in (_CLOSING_REF, _PAREN_REF, _GH_REF, _HASH_REF):
        text = pattern.sub(" ", text)
    return tokenize(text, cfg)


def preprocess_utterance(
    text: str, cfg: TokenizerConfig = DEFAULT_CONFIG
) -> tuple[list[str], list[tuple[int, int]]]:
    """Tokens of a comment body plus token-span ranges of its sentences."""
    clean = strip_markup(text, keep_inline_code=cfg.keep_inline_code)
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for sentence in split_sentences(clean, cfg):
        toks = tokenize(sentence, cfg)
        if toks:
            spans.append((len(tokens), len(tokens) + len(toks)))
            tokens.extend(toks)
    return tokens, spans


def render_input(example, upto_t: int) -> list[str]:
    """Flatten title and U_1..U_upto_t into one sequence with marker tokens."""
    if not 1 <= upto_t <= len(example.utterances):
        raise BoundsError(f"upto_t={upto_t} outside [1, {len(example.utterances)}]")
    seq = [TITLE_START, *example.title_tokens]
    for utt in example.utterances[:upto_t]:
        seq.append(UTTERANCE_START)
        seq.extend(utt.tokens)
    return seq


def join_tokens(groups: Sequence[Sequence[str]]) -> list[str]:
    return [tok for group in groups for tok in group]
