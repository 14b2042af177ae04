"""Domain lexicon: abbreviations, multiword expressions, tag overrides, stop rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

SECTIONS = ("abbreviations", "mwe", "pos", "stop", "stop_exceptions", "vague")

VALID_TAGS = ("Noun", "Verb", "Adjective", "Adverb", "Number", "ModelId", "PartNumber", "Other")


class LexiconError(Exception):
    pass


@dataclass(frozen=True)
class Lexicon:
    abbreviations: dict[str, str] = field(default_factory=dict)
    mwe_patterns: tuple[tuple[str, ...], ...] = ()
    pos_overrides: dict[str, str] = field(default_factory=dict)
    stop_words: frozenset = frozenset()
    stop_exceptions: tuple[str, ...] = ()
    vague_phrases: tuple[str, ...] = ()

    def __post_init__(self):
        # canonical roots must be fixed points of the abbreviation map
        for surface, canonical in self.abbreviations.items():
            target = self.abbreviations.get(canonical)
            if target is not None and target != canonical:
                raise LexiconError(
                    f"abbreviation chain: {surface!r} -> {canonical!r} -> {target!r}"
                )
        clash = set(self.stop_words) & set(self.pos_overrides)
        if clash:
            raise LexiconError(
                "tokens are both stop words and pos overrides: " + ", ".join(sorted(clash))
            )
        for tag in self.pos_overrides.values():
            if tag not in VALID_TAGS:
                raise LexiconError(f"unknown pos tag {tag!r}")
        # longest-first matching order for multiword expressions
        ordered = tuple(sorted(self.mwe_patterns, key=lambda p: (-len(p), p)))
        object.__setattr__(self, "mwe_patterns", ordered)
        object.__setattr__(
            self, "vague_phrases",
            tuple(sorted(self.vague_phrases, key=lambda p: (-len(p.split()), p))),
        )


def parse_lexicon(text: str, source: str = "<string>") -> Lexicon:
    abbreviations: dict[str, str] = {}
    mwe: list[tuple[str, ...]] = []
    pos: dict[str, str] = {}
    stop: set[str] = set()
    stop_exceptions: list[str] = []
    vague: list[str] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise LexiconError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise LexiconError(f"{source}:{lineno}: entry before any section header")
        if section == "abbreviations":
            if "->" not in line:
                raise LexiconError(f"{source}:{lineno}: expected 'surface -> canonical'")
            surface, canonical = (part.strip() for part in line.split("->", 1))
            if not surface or not canonical:
                raise LexiconError(f"{source}:{lineno}: empty abbreviation side")
            abbreviations[surface] = canonical
        elif section == "mwe":
            words = tuple(line.split())
            if len(words) < 2:
                raise LexiconError(f"{source}:{lineno}: multiword expression needs >= 2 words")
            mwe.append(words)
        elif section == "pos":
            if ":" not in line:
                raise LexiconError(f"{source}:{lineno}: expected 'token : TAG'")
            token, tag = (part.strip() for part in line.split(":", 1))
            pos[token] = tag
        elif section == "stop":
            stop.update(line.split())
        elif section == "stop_exceptions":
            stop_exceptions.append(line)
        elif section == "vague":
            vague.append(" ".join(line.split()))
    return Lexicon(
        abbreviations=abbreviations,
        mwe_patterns=tuple(mwe),
        pos_overrides=pos,
        stop_words=frozenset(stop),
        stop_exceptions=tuple(stop_exceptions),
        vague_phrases=tuple(vague),
    )


def load_lexicon(path) -> Lexicon:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_lexicon(fh.read(), source=str(path))


def default_lexicon_text() -> str:
    return resources.files("svctriage.data").joinpath("lexicon.txt").read_text("utf-8")


def default_lexicon() -> Lexicon:
    return parse_lexicon(default_lexicon_text(), source="svctriage/data/lexicon.txt")


def describe(lex: Lexicon) -> str:
    """Human-readable summary used by the inspect-lexicon command."""
    lines = [
        f"abbreviations: {len(lex.abbreviations)}",
        f"multiword expressions: {len(lex.mwe_patterns)}"
        + (f" (longest: {max(len(p) for p in lex.mwe_patterns)} words)" if lex.mwe_patterns else ""),
        f"pos overrides: {len(lex.pos_overrides)}",
        f"stop words: {len(lex.stop_words)}",
        f"stop exceptions: {len(lex.stop_exceptions)}",
        f"vague phrases: {len(lex.vague_phrases)}",
    ]
    return "\n".join(lines)
