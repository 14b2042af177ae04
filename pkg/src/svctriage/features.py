"""Count-based feature extraction: vocabulary, vectors, scores, pruning.

Documents arrive as lists of tagged segments (see textprep).  The vocabulary
holds the most frequent terms per grammatical category plus bigrams; vectors
are raw occurrence counts (weighted schemes such as TF-IDF are deliberately
not used here).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textprep import ADJECTIVE, ADVERB, NOUN, VERB, extract_ngrams

CATEGORIES = (NOUN, VERB, ADJECTIVE, ADVERB, "Bigram")

# high-frequency words that carry no routing signal
DEFAULT_WORTHLESS = ("unit", "vehicle")

TaggedDocument = list  # list[list[TaggedToken]]


@dataclass(frozen=True)
class VocabEntry:
    term: str
    category: str
    frequency: int


class Vocabulary:
    """Ordered feature terms; position in `entries` is the feature index."""

    def __init__(self, entries: list[VocabEntry]):
        self.entries = list(entries)
        self.index: dict[tuple[str, str], int] = {}
        for i, e in enumerate(self.entries):
            key = (e.term, e.category)
            if key in self.index:
                raise ValueError(f"duplicate vocabulary entry {key}")
            self.index[key] = i

    def __len__(self) -> int:
        return len(self.entries)

    def terms(self) -> list[str]:
        return [e.term for e in self.entries]

    def subset(self, indices) -> "Vocabulary":
        return Vocabulary([self.entries[i] for i in indices])

    def to_lines(self) -> list[str]:
        return [f"{e.term}\t{e.category}\t{e.frequency}" for e in self.entries]

    @classmethod
    def from_lines(cls, lines) -> "Vocabulary":
        entries = []
        for lineno, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected term<TAB>category<TAB>frequency")
            entries.append(VocabEntry(parts[0], parts[1], int(parts[2])))
        return cls(entries)

    def save(self, path, header: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            for line in self.to_lines():
                fh.write(line + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_lines(fh)


@dataclass(frozen=True)
class FeatureVector:
    record_id: str
    values: np.ndarray


def _document_counts(document) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    for segment in document:
        for tok in segment:
            if tok.tag in (NOUN, VERB, ADJECTIVE, ADVERB):
                key = (tok.text, tok.tag)
                counts[key] = counts.get(key, 0) + 1
        for bigram in extract_ngrams(segment, 2):
            key = (bigram, "Bigram")
            counts[key] = counts.get(key, 0) + 1
    return counts


def build_vocabulary(
    corpus, top_k: int, worthless=DEFAULT_WORTHLESS
) -> Vocabulary:
    """Top-k most frequent terms per category over tagged documents.

    Worthless words are excluded from the unigram categories; bigram counts
    come from adjacent-token pairs that never cross segment boundaries.
    """
    if top_k <= 0:
        return Vocabulary([])
    totals: dict[tuple[str, str], int] = {}
    for document in corpus:
        for key, c in _document_counts(document).items():
            totals[key] = totals.get(key, 0) + c
    worthless_set = set(worthless)
    selected: list[VocabEntry] = []
    for category in CATEGORIES:
        candidates = [
            (term, n) for (term, cat), n in totals.items()
            if cat == category and (category == "Bigram" or term not in worthless_set)
        ]
        candidates.sort(key=lambda item: (-item[1], item[0]))
        selected.extend(
            VocabEntry(term, category, n) for term, n in candidates[:top_k]
        )
    selected.sort(key=lambda e: (-e.frequency, e.term, e.category))
    return Vocabulary(selected)


def vectorize(document, vocab: Vocabulary, record_id: str = "") -> FeatureVector:
    """Occurrence counts of every vocabulary entry in one tagged document."""
    values = np.zeros(len(vocab), dtype=np.int64)
    for key, c in _document_counts(document).items():
        i = vocab.index.get(key)
        if i is not None:
            values[i] += c
    return FeatureVector(record_id=record_id, values=values)


def featurize_corpus(corpus, vocab: Vocabulary) -> np.ndarray:
    """Dense count matrix, one row per document."""
    X = np.zeros((len(corpus), len(vocab)), dtype=np.int64)
    for row, document in enumerate(corpus):
        X[row] = vectorize(document, vocab).values
    return X


def chi_squared_scores(X, labels) -> np.ndarray:
    """Chi-squared score per feature from presence/absence contingency tables.

    Presence is count > 0; the table is 2 x G over the classes observed in
    `labels`.  Features present in every document or in none score 0.
    """
    X = np.asarray(X)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-d matrix")
    if X.shape[0] != labels.shape[0]:
        raise ValueError("labels length must match rows")
    present = (X > 0)
    classes, y = np.unique(labels, return_inverse=True)
    n_docs = X.shape[0]
    onehot = np.zeros((n_docs, classes.size), dtype=np.float64)
    onehot[np.arange(n_docs), y] = 1.0
    col_totals = onehot.sum(axis=0)                     # docs per class
    o_present = present.astype(np.float64).T @ onehot   # F x G
    o_absent = col_totals[None, :] - o_present
    row_present = o_present.sum(axis=1)
    row_absent = float(n_docs) - row_present
    scores = np.zeros(X.shape[1], dtype=np.float64)
    ok = (row_present > 0) & (row_absent > 0)
    if np.any(ok):
        e_present = np.outer(row_present, col_totals) / n_docs
        e_absent = np.outer(row_absent, col_totals) / n_docs
        with np.errstate(divide="ignore", invalid="ignore"):
            chi = np.where(e_present > 0, (o_present - e_present) ** 2 / e_present, 0.0)
            chi = chi + np.where(e_absent > 0, (o_absent - e_absent) ** 2 / e_absent, 0.0)
        scores[ok] = chi.sum(axis=1)[ok]
    return scores


def correlation_matrix(X) -> np.ndarray:
    """Pearson correlation of feature columns.

    Zero-variance columns correlate 0 with everything and 1 with themselves.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe
    corr = unit.T @ unit
    dead = norms == 0
    corr[dead, :] = 0.0
    corr[:, dead] = 0.0
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def select_features(
    scores, corr, keep: int, corr_threshold: float
) -> list[int]:
    """Greedy selection by descending chi-squared with a redundancy cap.

    A feature is admitted unless its absolute correlation with an already
    admitted feature exceeds the threshold.  Ties in score break by feature
    index, so the result does not depend on input document order.
    """
    if keep < 1:
        raise ValueError("keep must be >= 1")
    if not 0.0 < corr_threshold <= 1.0:
        raise ValueError("corr_threshold must be in (0, 1]")
    scores = np.asarray(scores, dtype=np.float64)
    order = sorted(range(scores.size), key=lambda i: (-scores[i], i))
    chosen: list[int] = []
    for i in order:
        if len(chosen) >= keep:
            break
        if any(abs(corr[i, j]) > corr_threshold for j in chosen):
            continue
        chosen.append(i)
    return chosen


def missing_value_ratio(X) -> np.ndarray:
    """Share of documents in which each feature is absent.

    Reported for inspection only; pruning on this ratio discards rare but
    diagnostic terms, so it is never applied automatically.
    """
    X = np.asarray(X)
    if X.shape[0] == 0:
        raise ValueError("empty matrix")
    return (X == 0).mean(axis=0)


def write_feature_matrix(path, X, terms) -> None:
    """Dense numeric text with one header row of terms."""
    X = np.asarray(X)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(terms) + "\n")
        for row in X:
            fh.write("\t".join(str(v) for v in row.tolist()) + "\n")


def read_feature_matrix(path) -> tuple[np.ndarray, list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        terms = header.split("\t") if header else []
        rows = [
            [float(v) for v in line.rstrip("\n").split("\t")]
            for line in fh
            if line.strip()
        ]
    return np.asarray(rows, dtype=np.float64), terms
