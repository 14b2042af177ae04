"""Seeded synthetic service-report corpus with ground truth.

Stands in for the proprietary call dataset: per-department term banks,
"--"-separated task segments, part/unit number patterns, dictation-style
abbreviations and misspellings.  Generation is byte-deterministic for a
fixed seed.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from datetime import date, timedelta

from .records import DEPARTMENTS, RELATIONS, ServiceRecord

# Signature phrases are disjoint between departments so a plain keyword
# lookup can recover the ground-truth department of clean valid records.
DEPARTMENT_TERMS: dict[str, tuple[str, ...]] = {
    "Controls": ("control", "joystick", "switch", "pendant", "upper control"),
    "Vague": ("misc", "odd noise", "unknown issue"),
    "Harness": ("harness", "connector", "wire", "plug", "wire harness"),
    "Hydraulics": ("hydraulic", "hose", "cylinder", "pump", "hydraulic leak"),
    "PTO": ("pto", "clutch", "driveline", "pto shaft", "drive belt"),
    "Boom": ("boom", "jib", "elbow", "boom function", "upper valve"),
    "Maintenance": ("maintenance", "grease", "filter", "pm inspection", "oil change", "annual pm"),
    "Test": ("dielectric", "certification", "dielectric test", "load test"),
    "Rotation": ("rotation", "gearbox", "rotation gearbox", "slew ring", "rotation bearing"),
    "Auger": ("auger", "flight", "auger bit", "kelly bar"),
    "Outrigger": ("outrigger", "stabilizer", "outrigger pad"),
    "Digger": ("digger", "derrick", "pole", "winch", "pole guide", "winch rope"),
    "Body": ("body", "door", "hinge", "panel", "transfer pin"),
    "Chassis": ("chassis", "axle", "frame", "suspension", "brake"),
    "Electronics": ("battery", "alternator", "fuse", "relay", "sensor"),
    "Resale": ("resale", "decal", "refurb", "paint prep"),
}

FILLER_VERBS = (
    "check", "replace", "repair", "inspect", "install", "remove",
    "adjust", "clean", "find", "perform", "cut", "test",
)
FILLER_NOUNS = (
    "unit", "area", "system", "pressure", "bolt", "bracket",
    "mount", "shaft", "valve", "seal", "line", "fitting",
)
FILLER_ADJECTIVES = ("bad", "new", "old", "loose", "stuck", "faulty")
FILLER_ADVERBS = ("quickly", "properly", "fully", "completely")

# past-tense surfaces the lemmatizer maps back to the canonical verb
VERB_PAST = {
    "check": "checked", "replace": "replaced", "repair": "repaired",
    "inspect": "inspected", "install": "installed", "remove": "removed",
    "adjust": "adjusted", "clean": "cleaned", "find": "found",
    "perform": "performed", "cut": "cut", "test": "tested",
}

# canonical word -> dictation surface variants; every variant has an inverse
# entry in the shipped lexicon so the domain path folds the counts back
CANONICAL_TO_ABBREV = {
    "hydraulic": ("hyd", "hydr", "hydrlc"), "boom": ("bm",),
    "rotation": ("rot", "rotn"), "gearbox": ("gbx", "grbx"),
    "outrigger": ("otr", "outrig"), "auger": ("aug", "augr"),
    "chassis": ("chas", "chass"), "battery": ("batt", "btry"),
    "alternator": ("alt", "altrntr"), "connector": ("conn", "cnctr"),
    "harness": ("hrn", "harn"), "winch": ("wnch", "wch"),
    "cylinder": ("cyl", "cylndr"), "maintenance": ("maint", "mntnc"),
    "inspect": ("insp", "inspct"), "replace": ("repl", "rplc"),
    "repair": ("rpr", "repr"), "check": ("chk", "chck"),
    "service": ("svc", "srvc"), "pressure": ("press", "prsr"),
    "control": ("ctrl", "cntrl"), "switch": ("swtch", "swch"),
    "down": ("dwn",), "break": ("brk",),
    "suspension": ("susp", "suspn"), "stabilizer": ("stab", "stblzr"),
    "derrick": ("drk", "derr"), "digger": ("dgr", "dggr"),
    "joystick": ("jstk", "joystk"), "pendant": ("pndt", "pndnt"),
    "sensor": ("snsr", "sensr"), "relay": ("rly",),
    "dielectric": ("dielec", "dlctrc"), "certification": ("cert", "certif"),
    "filter": ("fltr", "filtr"), "clutch": ("cltch", "clch"),
    "pump": ("pmp",), "frame": ("frm",), "hinge": ("hng", "hnge"),
    "panel": ("pnl", "panl"), "door": ("dr",), "flight": ("flt",),
    "hose": ("hse",), "bearing": ("brg", "brng"),
    "adjust": ("adj", "adjst"), "clean": ("cln",), "leak": ("lkg", "lk"),
    "driveline": ("drvln",), "elbow": ("elbw",), "grease": ("grs",),
    "resale": ("rsl",), "decal": ("dcl",), "refurb": ("rfrb",),
    "axle": ("axl",), "fuse": ("fse",),
}

VAGUE_CALL_PHRASES = ("service needed", "unit failed", "needs service", "not working")

# technician language documenting the claim outcome; false claims usually say
# the reported component was fine, valid ones often confirm the complaint
FALSE_MARKER_RATE = 0.85
VALID_MARKER_RATE = 0.5

_ZIPS = (
    "95616", "30301", "60601", "73301", "85001", "19103", "98101", "44101",
    "63101", "27601", "55401", "80202", "37201", "46204", "89501", "50309",
)
_COMPANIES = (
    "acme utility", "northline power", "summit fleet", "redwood services",
    "bluegrass energy", "prairie electric", "cascade tree", "gulf linework",
    "ironpeak rigging", "lakeside telecom", "canyon drilling", "harbor crane",
)


def default_class_mix() -> dict[str, float]:
    """Uniform over the 15 concrete departments; the Vague department gets 0."""
    depts = [d for d in DEPARTMENTS if d != "Vague"]
    share = 1.0 / len(depts)
    mix = {d: share for d in depts}
    mix["Vague"] = 0.0
    return mix


def default_relation_mix() -> dict[str, float]:
    return {"Valid": 0.6, "False": 0.25, "Vague": 0.15}


@dataclass(frozen=True)
class SynthConfig:
    n_records: int
    seed: int
    class_mix: dict[str, float] = field(default_factory=default_class_mix)
    relation_mix: dict[str, float] = field(default_factory=default_relation_mix)
    noise_rate: float = 0.0
    abbreviation_rate: float = 0.0

    def validate(self) -> None:
        if self.n_records < 0:
            raise ValueError("n_records must be non-negative")
        for name, mix, allowed in (
            ("class_mix", self.class_mix, DEPARTMENTS),
            ("relation_mix", self.relation_mix, RELATIONS),
        ):
            for key in mix:
                if key not in allowed:
                    raise ValueError(f"{name} has unknown key {key!r}")
            if mix and abs(sum(mix.values()) - 1.0) > 1e-9:
                raise ValueError(f"{name} proportions sum to {sum(mix.values())}, not 1")
            if any(v < 0 for v in mix.values()):
                raise ValueError(f"{name} has a negative proportion")
        for name, rate in (
            ("noise_rate", self.noise_rate),
            ("abbreviation_rate", self.abbreviation_rate),
        ):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")


def _largest_remainder(n: int, mix: dict[str, float], order) -> dict[str, int]:
    """Integer allocation of n items proportional to mix, remainder-greedy."""
    keys = [k for k in order if k in mix]
    raw = {k: n * mix[k] for k in keys}
    counts = {k: int(raw[k]) for k in keys}
    short = n - sum(counts.values())
    by_frac = sorted(keys, key=lambda k: (-(raw[k] - counts[k]), keys.index(k)))
    for k in by_frac[:short]:
        counts[k] += 1
    return counts


class _Writer:
    """Renders tokens with seeded abbreviation, inflection, noise, and casing."""

    def __init__(self, rng: random.Random, noise_rate: float, abbreviation_rate: float):
        self.rng = rng
        self.noise = noise_rate
        self.abbrev = abbreviation_rate

    def word(self, canonical: str, past: bool = False) -> str:
        variants = CANONICAL_TO_ABBREV.get(canonical)
        if self.abbrev > 0 and variants:
            if self.rng.random() < self.abbrev:
                return self._mangle(self.rng.choice(variants))
        surface = VERB_PAST.get(canonical, canonical) if past else canonical
        return self._mangle(surface)

    def phrase(self, text: str, past: bool = False) -> str:
        return " ".join(self.word(w, past=past) for w in text.split())

    def _mangle(self, token: str) -> str:
        out = token
        if (
            self.noise > 0
            and len(out) >= 4
            and out.isalpha()
            and self.rng.random() < self.noise
        ):
            i = self.rng.randrange(1, len(out) - 1)
            if self.rng.random() < 0.5:
                out = out[:i] + out[i + 1:]
            else:
                out = out[:i] + out[i + 1] + out[i] + out[i + 2:]
        if self.rng.random() < 0.05:
            out = out.upper()
        return out


def _detail_segments(
    dept: str, writer: _Writer, rng: random.Random
) -> tuple[list[str], list[str]]:
    """Task segments for one record plus the signature phrases they mention."""
    sigs = list(DEPARTMENT_TERMS[dept])
    rng.shuffle(sigs)
    picked = sigs[: max(2, min(3, len(sigs)))]
    segments = []
    for sig in picked:
        verb = rng.choice(FILLER_VERBS)
        style = rng.randrange(4)
        if style == 0:
            seg = f"{writer.word(verb, past=True)} {writer.phrase(sig)}"
        elif style == 1:
            adj = rng.choice(FILLER_ADJECTIVES)
            seg = f"{writer.word(verb, past=True)} {adj} {writer.phrase(sig)}"
        elif style == 2:
            noun = rng.choice(FILLER_NOUNS)
            seg = (
                f"{writer.word(verb, past=True)} {writer.phrase(sig)}"
                f" and {writer.word(rng.choice(FILLER_VERBS), past=True)} {writer.word(noun)}"
            )
        else:
            adv = rng.choice(FILLER_ADVERBS)
            seg = f"{adv} {writer.word(verb, past=True)} {writer.phrase(sig)}"
        if rng.random() < 0.25:
            if rng.random() < 0.5:
                seg += f" pn{rng.randrange(10**6, 10**10)}"
            else:
                seg += f" 97{rng.randrange(10**7):07d} {writer.word('replace', past=True)}"
        segments.append(seg)
    extra = rng.randrange(3)
    for _ in range(extra):
        verb = rng.choice(FILLER_VERBS)
        noun = rng.choice(FILLER_NOUNS)
        segments.append(f"{writer.word(verb, past=True)} {writer.word(noun)}")
    if rng.random() < 0.3:
        segments.append(f"{writer.word('perform', past=True)} {writer.word('test')}")
    rng.shuffle(segments)
    return segments, picked


def _call_log(dept: str, writer: _Writer, rng: random.Random, from_sigs=None) -> str:
    """Operator summary; a valid claim names a component the detail covers."""
    sig = rng.choice(from_sigs) if from_sigs else rng.choice(DEPARTMENT_TERMS[dept])
    style = rng.randrange(5)
    if style == 0:
        unit = rng.randrange(1000, 99999)
        return f"{unit}-{writer.phrase(sig)} {writer.word(rng.choice(FILLER_ADJECTIVES))}"
    if style == 1:
        return f"{writer.phrase(sig)} {writer.word('down')}"
    if style == 2:
        return f"{writer.word(rng.choice(FILLER_VERBS))} {writer.phrase(sig)}"
    if style == 3:
        unit = rng.randrange(1000, 99999)
        return f"{unit}-{writer.word('replace')} {writer.phrase(sig)} unit is {writer.word('down')}"
    return f"{writer.phrase(sig)} {writer.word(rng.choice(FILLER_ADJECTIVES))}"


def _mismatch_segment(
    call_sig: str, detail_sig: str, writer: _Writer, rng: random.Random
) -> str:
    style = rng.randrange(4)
    if style == 0:
        return f"{writer.word('check', past=True)} {writer.phrase(call_sig)} no fault found"
    if style == 1:
        return f"could not duplicate {writer.phrase(call_sig)} report"
    if style == 2:
        return f"{writer.word('find', past=True)} {writer.phrase(detail_sig)} instead"
    return f"{writer.phrase(call_sig)} misdiagnosed"


def _confirmation_segment(sig: str, writer: _Writer, rng: random.Random) -> str:
    if rng.random() < 0.5:
        return f"confirmed {writer.phrase(sig)} complaint"
    return f"verified {writer.phrase(sig)}"


def _join_segments(segments: list[str], rng: random.Random) -> str:
    sep = "\n" if rng.random() < 0.1 else "--"
    return sep.join(segments)


def _metadata(rng: random.Random) -> dict:
    start = date(2012, 1, 1)
    return {
        "age_months": rng.randrange(0, 240),
        "zip": rng.choice(_ZIPS),
        "company": rng.choice(_COMPANIES),
        "failure_date": (start + timedelta(days=rng.randrange(3650))).isoformat(),
        "runtime_hours": round(rng.uniform(50.0, 20000.0), 1),
        "ownership": rng.choices(
            ("purchased", "leased", "rented"), weights=(5, 3, 2), k=1
        )[0],
        "months_since_service": round(rng.uniform(0.0, 36.0), 1),
        "operator_id": f"op{rng.randrange(1, 200):03d}",
    }


def generate_corpus(
    config: SynthConfig,
) -> tuple[list[ServiceRecord], dict[str, tuple[str, str]]]:
    """Generate records plus an id -> (relation, department) ground-truth map.

    Relation and department counts follow the configured mixes by largest-
    remainder allocation, so realized proportions are within one record of
    the targets.  Identical configs produce identical corpora.
    """
    config.validate()
    rng = random.Random(config.seed)
    writer = _Writer(rng, config.noise_rate, config.abbreviation_rate)

    relation_counts = _largest_remainder(config.n_records, config.relation_mix, RELATIONS)
    plan: list[tuple[str, str]] = []
    for relation in RELATIONS:
        n_rel = relation_counts.get(relation, 0)
        if n_rel == 0:
            continue
        dept_counts = _largest_remainder(n_rel, config.class_mix, DEPARTMENTS)
        for dept in DEPARTMENTS:
            plan.extend((relation, dept) for _ in range(dept_counts.get(dept, 0)))
    rng.shuffle(plan)

    records: list[ServiceRecord] = []
    truth: dict[str, tuple[str, str]] = {}
    departments = list(DEPARTMENTS)
    for idx, (relation, dept) in enumerate(plan):
        rid = f"r{idx:06d}"
        segments, detail_sigs = _detail_segments(dept, writer, rng)
        if relation == "Valid":
            call_log = _call_log(dept, writer, rng, from_sigs=detail_sigs)
            if rng.random() < VALID_MARKER_RATE:
                segments.insert(
                    rng.randrange(len(segments) + 1),
                    _confirmation_segment(rng.choice(detail_sigs), writer, rng),
                )
        elif relation == "False":
            others = [d for d in departments if d != dept and config.class_mix.get(d, 0) > 0]
            if not others:
                others = [d for d in departments if d != dept]
            weights = [max(config.class_mix.get(d, 0.0), 1e-9) for d in others]
            wrong = rng.choices(others, weights=weights, k=1)[0]
            wrong_sig = rng.choice(DEPARTMENT_TERMS[wrong])
            call_log = _call_log(wrong, writer, rng, from_sigs=[wrong_sig])
            if rng.random() < FALSE_MARKER_RATE:
                segments.insert(
                    rng.randrange(len(segments) + 1),
                    _mismatch_segment(wrong_sig, rng.choice(detail_sigs), writer, rng),
                )
        else:
            call_log = "" if rng.random() < 0.5 else rng.choice(VAGUE_CALL_PHRASES)
        detail = _join_segments(segments, rng)
        records.append(
            ServiceRecord(
                id=rid,
                call_log=call_log,
                detail=detail,
                relation=relation,
                department=dept,
                **_metadata(rng),
            )
        )
        truth[rid] = (relation, dept)
    return records, truth


def _phrase_pattern(phrase: str) -> re.Pattern:
    parts = []
    for word in phrase.split():
        variants = CANONICAL_TO_ABBREV.get(word)
        if variants:
            alts = "|".join(re.escape(v) for v in (word,) + variants)
            parts.append(f"(?:{alts})")
        else:
            parts.append(re.escape(word))
    return re.compile(r"(?<![a-z0-9])" + r"\s+".join(parts) + r"(?![a-z0-9])")


_SIGNATURE_PATTERNS = [
    (dept, phrase, _phrase_pattern(phrase))
    for dept in DEPARTMENTS
    for phrase in sorted(DEPARTMENT_TERMS[dept], key=lambda p: -len(p.split()))
]
_SIGNATURE_PATTERNS.sort(key=lambda item: -len(item[1].split()))


def keyword_department(text: str) -> str | None:
    """Trivial keyword-lookup baseline: most signature hits, longest match first."""
    masked = text.lower()
    hits = {d: 0 for d in DEPARTMENTS}
    for dept, _phrase, pattern in _SIGNATURE_PATTERNS:
        while True:
            m = pattern.search(masked)
            if m is None:
                break
            hits[dept] += 1
            masked = masked[: m.start()] + "#" * (m.end() - m.start()) + masked[m.end():]
    best = max(hits.values())
    if best == 0:
        return None
    winners = [d for d in DEPARTMENTS if hits[d] == best]
    return winners[0]
