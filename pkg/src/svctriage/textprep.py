"""Text preprocessing for service reports.

Normalization, domain lemmatization, stop rules, vague-phrase removal,
staged-term recognition, multiword-aware tokenization, and tagging.  All
functions are pure; the lexicon is immutable after load.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .lexicon import Lexicon

NOUN = "Noun"
VERB = "Verb"
ADJECTIVE = "Adjective"
ADVERB = "Adverb"
NUMBER = "Number"
MODEL_ID = "ModelId"
PART_NUMBER = "PartNumber"
OTHER = "Other"

PART_NUMBER_KIND = "PartNumber"
UNIT_NUMBER_KIND = "UnitNumber"
SERVICE_DATE_KIND = "ServiceDate"


@dataclass(frozen=True)
class TaggedToken:
    text: str
    tag: str
    span: tuple[int, int]
    n: int = 1


@dataclass(frozen=True)
class TermMatch:
    kind: str
    raw: str
    span: tuple[int, int]


_SEGMENT_SPLIT = re.compile(r"--+|\n+")
_WS = re.compile(r"\s+")
_WORD = re.compile(r"\S+")
_DIGITS = re.compile(r"^\d+$")
_MODEL_ID = re.compile(r"^an\d+$")
_HAS_DIGIT = re.compile(r"\d")

_PART_NUMBER = re.compile(r"(?<![a-z0-9])(?:pn)?\d{6,12}(?![0-9])")
_UNIT_NUMBER = re.compile(r"(?<![\S])\d{4,5}(?=$|[\s\-])")
_SERVICE_DATE = re.compile(
    r"(?<![0-9])(?:\d{4}-\d{2}-\d{2}|\d{1,2}/\d{1,2}/\d{2,4})(?![0-9])"
)

_TERM_PATTERNS = (
    (PART_NUMBER_KIND, _PART_NUMBER),
    (UNIT_NUMBER_KIND, _UNIT_NUMBER),
    (SERVICE_DATE_KIND, _SERVICE_DATE),
)

# small irregular-form table; abbreviations and suffix rules cover the rest
_IRREGULAR = {
    "broken": "break",
    "worn": "wear",
    "torn": "tear",
    "blown": "blow",
    "frozen": "freeze",
    "bent": "bend",
    "found": "find",
    "greased": "grease",
    "greasing": "grease",
}

_VOWELS = "aeiou"
_KEEP_DOUBLE = ("ll", "ss", "ff", "zz", "ee", "oo")


def normalize(text: str) -> list[str]:
    """Lowercase and split a raw report into task segments.

    Segments are separated by "--" runs or newlines; inner whitespace is
    collapsed and empty segments dropped.
    """
    segments = []
    for part in _SEGMENT_SPLIT.split(text.lower()):
        cleaned = _WS.sub(" ", part).strip()
        if cleaned:
            segments.append(cleaned)
    return segments


def _strip_suffix(word: str) -> str:
    if len(word) >= 5 and (word.endswith("ing") or word.endswith("ed")):
        stem = word[:-3] if word.endswith("ing") else word[:-2]
        if len(stem) >= 2:
            if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-2:] not in _KEEP_DOUBLE:
                return stem[:-1]
            if stem.endswith("i"):
                return stem[:-1] + "y"
            if (
                len(stem) >= 3
                and stem[-1] not in _VOWELS
                and stem[-1] not in "wxy"
                and stem[-2] in _VOWELS
                and stem[-3] not in _VOWELS
            ):
                return stem + "e"
            return stem
        return word
    if word.endswith("ies") and len(word) >= 5:
        return word[:-3] + "y"
    if word.endswith("es") and len(word) >= 5:
        stem = word[:-2]
        if stem.endswith(("ss", "x", "z", "ch", "sh")):
            return stem
        return word[:-1]
    if (
        word.endswith("s")
        and len(word) >= 4
        and not word.endswith(("ss", "us", "is"))
    ):
        return word[:-1]
    return word


def lemmatize(token: str, lexicon: Lexicon) -> str:
    """Reduce one normalized word to its canonical root.

    The abbreviation map applies first, then the irregular-form table, then
    suffix stripping.  Tokens containing digits pass through untouched.
    """
    if not token or _HAS_DIGIT.search(token):
        return token
    t = lexicon.abbreviations.get(token, token)
    t = _IRREGULAR.get(t, t)
    t = _strip_suffix(t)
    # a stripped form may itself be a known abbreviation surface
    return lexicon.abbreviations.get(t, t)


def strip_vague_phrases(text: str, lexicon: Lexicon) -> tuple[str, bool]:
    """Remove listed vague phrases; flag is true when nothing else remains."""
    result = text
    for phrase in lexicon.vague_phrases:
        pattern = re.compile(
            r"(?<![a-z0-9])" + r"\s+".join(re.escape(w) for w in phrase.split())
            + r"(?![a-z0-9])"
        )
        result = pattern.sub(" ", result)
    result = _WS.sub(" ", result).strip()
    return result, result == ""


def recognize_terms(text: str) -> list[TermMatch]:
    """Find part numbers, unit numbers, and service dates.

    Matches are non-overlapping; on overlap the leftmost-longest match wins,
    with part numbers preferred over unit numbers at equal spans.
    """
    candidates = []
    for priority, (kind, pattern) in enumerate(_TERM_PATTERNS):
        for m in pattern.finditer(text):
            candidates.append((m.start(), -(m.end() - m.start()), priority, m.end(), kind))
    candidates.sort()
    matches: list[TermMatch] = []
    taken_until = -1
    for start, neg_len, _priority, end, kind in candidates:
        if start <= taken_until:
            continue
        matches.append(TermMatch(kind=kind, raw=text[start:end], span=(start, end)))
        taken_until = end - 1
    return matches


_TERM_TAGS = {
    PART_NUMBER_KIND: PART_NUMBER,
    UNIT_NUMBER_KIND: NUMBER,
    SERVICE_DATE_KIND: NUMBER,
}


def _split_tokens(segment: str) -> list[TaggedToken]:
    """Whitespace/hyphen word split with recognized terms kept intact."""
    matches = recognize_terms(segment)
    protected = [m.span for m in matches]
    by_start = {m.span[0]: m for m in matches}

    def in_protected(i: int) -> bool:
        return any(s <= i < e for s, e in protected)

    tokens: list[TaggedToken] = []
    for w in _WORD.finditer(segment):
        start, end = w.start(), w.end()
        cut_points = [start]
        for i in range(start, end):
            if segment[i] == "-" and not in_protected(i):
                cut_points.append(i)
        cut_points.append(end)
        for a, b in zip(cut_points, cut_points[1:]):
            if segment[a] == "-":
                a += 1
            if a >= b:
                continue
            piece = segment[a:b]
            m = by_start.get(a)
            if m is not None and m.span == (a, b):
                tokens.append(TaggedToken(piece, _TERM_TAGS[m.kind], (a, b)))
            elif _DIGITS.match(piece):
                tokens.append(TaggedToken(piece, NUMBER, (a, b)))
            else:
                tokens.append(TaggedToken(piece, OTHER, (a, b)))
    return tokens


def _mwe_by_first_word(lexicon: Lexicon) -> dict[str, list[tuple[str, ...]]]:
    table: dict[str, list[tuple[str, ...]]] = {}
    for pattern in lexicon.mwe_patterns:  # already longest-first
        table.setdefault(pattern[0], []).append(pattern)
    return table


def _merge_mwe(tokens: list[TaggedToken], lexicon: Lexicon) -> list[TaggedToken]:
    """Merge multiword expressions longest-first, earlier start winning ties."""
    table = _mwe_by_first_word(lexicon)
    out: list[TaggedToken] = []
    i = 0
    n_tokens = len(tokens)
    while i < n_tokens:
        merged = None
        for pattern in table.get(tokens[i].text, ()):
            plen = len(pattern)
            if i + plen <= n_tokens and all(
                tokens[i + j].text == pattern[j] for j in range(1, plen)
            ):
                merged = TaggedToken(
                    text=" ".join(pattern),
                    tag=NOUN,
                    span=(tokens[i].span[0], tokens[i + plen - 1].span[1]),
                    n=sum(t.n for t in tokens[i:i + plen]),
                )
                i += plen
                break
        if merged is not None:
            out.append(merged)
        else:
            out.append(tokens[i])
            i += 1
    return out


def tokenize(segment: str, lexicon: Lexicon) -> list[TaggedToken]:
    """Split a normalized segment into tokens with multiword expressions merged."""
    return _merge_mwe(_split_tokens(segment), lexicon)


def _apply_stop_rules_tagged(
    tokens: list[TaggedToken], lexicon: Lexicon
) -> list[TaggedToken]:
    use_an_rule = "an_number" in lexicon.stop_exceptions
    out: list[TaggedToken] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if (
            use_an_rule
            and tok.text == "an"
            and i + 1 < len(tokens)
            and _DIGITS.match(tokens[i + 1].text)
        ):
            nxt = tokens[i + 1]
            out.append(
                TaggedToken(
                    text="an" + nxt.text,
                    tag=MODEL_ID,
                    span=(tok.span[0], nxt.span[1]),
                    n=tok.n + nxt.n,
                )
            )
            i += 2
            continue
        if tok.text in lexicon.stop_words:
            i += 1
            continue
        out.append(tok)
        i += 1
    return out


def apply_stop_rules(tokens: list[str], lexicon: Lexicon) -> list[str]:
    """Drop stop words; "an" directly before a number becomes a ModelId token."""
    tagged = [
        TaggedToken(t, NUMBER if _DIGITS.match(t) else OTHER, (i, i + 1))
        for i, t in enumerate(tokens)
    ]
    return [t.text for t in _apply_stop_rules_tagged(tagged, lexicon)]


def tag_pos(tokens: list[TaggedToken], lexicon: Lexicon) -> list[TaggedToken]:
    """Assign grammatical tags: lexicon overrides first, then structure, then suffixes."""
    out = []
    for tok in tokens:
        override = lexicon.pos_overrides.get(tok.text)
        if override is not None:
            out.append(replace(tok, tag=override))
        elif tok.tag in (PART_NUMBER, NUMBER, MODEL_ID):
            out.append(tok)
        elif tok.n >= 2:
            out.append(replace(tok, tag=NOUN))
        elif _MODEL_ID.match(tok.text):
            out.append(replace(tok, tag=MODEL_ID))
        elif _DIGITS.match(tok.text):
            out.append(replace(tok, tag=NUMBER))
        elif tok.text.endswith("ly") and len(tok.text) > 3:
            out.append(replace(tok, tag=ADVERB))
        elif (tok.text.endswith("ed") or tok.text.endswith("ing")) and len(tok.text) > 4:
            out.append(replace(tok, tag=VERB))
        else:
            out.append(replace(tok, tag=NOUN))
    return out


def extract_ngrams(tokens: list[TaggedToken], n: int) -> list[str]:
    """All contiguous n-token sequences of one segment, space-joined."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    texts = [t.text for t in tokens]
    return [" ".join(texts[i:i + n]) for i in range(len(texts) - n + 1)]


def preprocess_segment(segment: str, lexicon: Lexicon) -> list[TaggedToken]:
    """Full chain for one normalized segment.

    Vague phrases are removed, words are lemmatized, stop rules applied,
    multiword expressions merged on canonical forms, and tags assigned.
    """
    cleaned, vague = strip_vague_phrases(segment, lexicon)
    if vague:
        return []
    tokens = _split_tokens(cleaned)
    lemmed = [
        tok if tok.tag != OTHER else replace(tok, text=lemmatize(tok.text, lexicon))
        for tok in tokens
    ]
    kept = _apply_stop_rules_tagged(lemmed, lexicon)
    merged = _merge_mwe(kept, lexicon)
    return tag_pos(merged, lexicon)


def preprocess_text(text: str, lexicon: Lexicon) -> list[list[TaggedToken]]:
    """Normalize a raw report and preprocess every segment; empty segments drop."""
    out = []
    for segment in normalize(text):
        tokens = preprocess_segment(segment, lexicon)
        if tokens:
            out.append(tokens)
    return out
