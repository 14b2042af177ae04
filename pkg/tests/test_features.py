import numpy as np
import pytest

from svctriage.features import (
    FeatureVector,
    Vocabulary,
    VocabEntry,
    build_vocabulary,
    chi_squared_scores,
    correlation_matrix,
    featurize_corpus,
    missing_value_ratio,
    read_feature_matrix,
    select_features,
    vectorize,
    write_feature_matrix,
)
from svctriage.textprep import TaggedToken


def tok(text, tag="Noun", n=1):
    return TaggedToken(text, tag, (0, len(text)), n)


def doc(*segments):
    """Each segment is a list of (text, tag) or plain-text nouns."""
    out = []
    for seg in segments:
        tokens = []
        for item in seg:
            if isinstance(item, tuple):
                tokens.append(tok(*item))
            else:
                tokens.append(tok(item))
        out.append(tokens)
    return out


# --- vocabulary ---------------------------------------------------------------

def test_most_frequent_noun_ranks_first():
    corpus = [doc(["boom", "boom", "winch"]), doc(["boom", "hose"])]
    vocab = build_vocabulary(corpus, top_k=10)
    nouns = [e for e in vocab.entries if e.category == "Noun"]
    assert nouns[0].term == "boom"
    assert nouns[0].frequency == 3


def test_worthless_words_excluded_regardless_of_count():
    corpus = [doc(["unit"] * 50 + ["boom"]), doc(["vehicle"] * 10)]
    vocab = build_vocabulary(corpus, top_k=5)
    assert all(e.term not in ("unit", "vehicle") for e in vocab.entries if e.category == "Noun")


def test_worthless_words_allowed_inside_bigrams():
    corpus = [doc(["unit", "function"])] * 3
    vocab = build_vocabulary(corpus, top_k=5)
    bigrams = [e.term for e in vocab.entries if e.category == "Bigram"]
    assert "unit function" in bigrams


def test_top_k_zero_empty_vocabulary():
    assert len(build_vocabulary([doc(["boom"])], top_k=0)) == 0


def test_per_category_top_k_respected():
    corpus = [doc([f"n{i}" for i in range(30)])]
    vocab = build_vocabulary(corpus, top_k=7)
    per_cat = {}
    for e in vocab.entries:
        per_cat[e.category] = per_cat.get(e.category, 0) + 1
    assert all(v <= 7 for v in per_cat.values())


def test_entries_sorted_by_frequency_then_term():
    corpus = [doc(["b", "b", "a", "a", "c"])]
    vocab = build_vocabulary(corpus, top_k=10)
    keys = [(-e.frequency, e.term) for e in vocab.entries if e.category == "Noun"]
    assert keys == sorted(keys)


def test_bigrams_do_not_cross_segments():
    corpus = [doc(["boom", "down"], ["hose", "leak"])]
    vocab = build_vocabulary(corpus, top_k=10)
    bigrams = {e.term for e in vocab.entries if e.category == "Bigram"}
    assert "boom down" in bigrams
    assert "hose leak" in bigrams
    assert "down hose" not in bigrams


def test_vocabulary_round_trip(tmp_path):
    vocab = build_vocabulary([doc(["boom", "winch", ("badly", "Adverb")])], top_k=5)
    path = tmp_path / "vocab.tsv"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert [e for e in loaded.entries] == [e for e in vocab.entries]


def test_duplicate_entries_rejected():
    with pytest.raises(ValueError):
        Vocabulary([VocabEntry("a", "Noun", 1), VocabEntry("a", "Noun", 2)])


# --- vectorize ------------------------------------------------------------------

def _vocab_boom_winch_hose():
    return Vocabulary(
        [
            VocabEntry("boom", "Noun", 3),
            VocabEntry("winch", "Noun", 2),
            VocabEntry("hose", "Noun", 1),
        ]
    )


def test_vectorize_empty_document_is_zero():
    v = vectorize([], _vocab_boom_winch_hose())
    assert v.values.tolist() == [0, 0, 0]


def test_vectorize_counts():
    v = vectorize(doc(["boom", "boom", "winch"]), _vocab_boom_winch_hose(), "r1")
    assert isinstance(v, FeatureVector)
    assert v.record_id == "r1"
    assert v.values.tolist() == [2, 1, 0]


def test_vectorize_one_of_each():
    v = vectorize(doc(["boom", "winch", "hose"]), _vocab_boom_winch_hose())
    assert v.values.tolist() == [1, 1, 1]


def test_vectorize_linear_over_segment_concatenation():
    vocab = _vocab_boom_winch_hose()
    d1 = doc(["boom", "winch"])
    d2 = doc(["boom", "hose"])
    combined = d1 + d2
    assert (
        vectorize(combined, vocab).values
        == vectorize(d1, vocab).values + vectorize(d2, vocab).values
    ).all()


def test_featurize_corpus_shape():
    vocab = _vocab_boom_winch_hose()
    X = featurize_corpus([doc(["boom"]), doc(["hose", "hose"])], vocab)
    assert X.shape == (2, 3)
    assert X[1].tolist() == [0, 0, 2]


# --- chi-squared -----------------------------------------------------------------

def brute_force_chi2(present, labels):
    """Independent contingency-table computation, plain loops."""
    present = np.asarray(present, dtype=bool)
    labels = list(labels)
    classes = sorted(set(labels))
    n = len(labels)
    out = []
    for j in range(present.shape[1]):
        row1 = sum(1 for i in range(n) if present[i, j])
        row0 = n - row1
        if row1 == 0 or row0 == 0:
            out.append(0.0)
            continue
        chi = 0.0
        for g in classes:
            col = sum(1 for lab in labels if lab == g)
            o1 = sum(1 for i in range(n) if present[i, j] and labels[i] == g)
            o0 = col - o1
            e1 = row1 * col / n
            e0 = row0 * col / n
            if e1 > 0:
                chi += (o1 - e1) ** 2 / e1
            if e0 > 0:
                chi += (o0 - e0) ** 2 / e0
        out.append(chi)
    return np.array(out)


def test_chi2_uniform_presence_scores_zero():
    X = np.array([[1], [1], [1], [1]])
    labels = [0, 0, 1, 1]
    assert chi_squared_scores(X, labels)[0] == 0.0


def test_chi2_worked_example_is_7_2():
    # 2 classes x 10 docs; present in 8 of A and 2 of B
    X = np.zeros((20, 1), dtype=int)
    labels = [0] * 10 + [1] * 10
    X[:8, 0] = 1
    X[10:12, 0] = 1
    assert chi_squared_scores(X, labels)[0] == pytest.approx(7.2, abs=1e-12)


def test_chi2_feature_absent_everywhere_scores_zero():
    X = np.zeros((6, 1), dtype=int)
    assert chi_squared_scores(X, [0, 0, 0, 1, 1, 1])[0] == 0.0


def test_chi2_label_permutation_invariance():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 3, size=(40, 6))
    labels = rng.integers(0, 4, size=40)
    base = chi_squared_scores(X, labels)
    remap = {0: 3, 1: 0, 2: 2, 3: 1}
    permuted = chi_squared_scores(X, np.array([remap[int(v)] for v in labels]))
    assert np.allclose(base, permuted, atol=1e-12)


def test_chi2_matches_brute_force_on_random_corpora():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = rng.integers(3, 50)
        f = rng.integers(1, 8)
        g = rng.integers(2, 5)
        X = rng.integers(0, 3, size=(n, f))
        labels = rng.integers(0, g, size=n)
        got = chi_squared_scores(X, labels)
        want = brute_force_chi2(X > 0, labels.tolist())
        assert np.allclose(got, want, atol=1e-9)


def test_chi2_empty_matrix_rejected():
    with pytest.raises(ValueError):
        chi_squared_scores(np.zeros((0, 2)), [])


# --- correlation ------------------------------------------------------------------

def test_correlation_self_is_one():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [4.0, 4.0]])
    corr = correlation_matrix(X)
    assert corr[0, 0] == 1.0


def test_correlation_affine_invariance():
    x = np.array([1.0, 2.0, 5.0, 7.0])
    X = np.column_stack([x, 2 * x + 3])
    corr = correlation_matrix(X)
    assert corr[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_correlation_reversed_is_minus_one():
    X = np.column_stack([[1, 2, 3, 4], [4, 3, 2, 1]]).astype(float)
    assert correlation_matrix(X)[0, 1] == pytest.approx(-1.0, abs=1e-12)


def test_correlation_zero_variance_convention():
    X = np.column_stack([[1, 1, 1], [1, 2, 3]]).astype(float)
    corr = correlation_matrix(X)
    assert corr[0, 0] == 1.0
    assert corr[0, 1] == 0.0
    assert corr[1, 0] == 0.0


def test_correlation_symmetric_bounded():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 8))
    corr = correlation_matrix(X)
    assert np.allclose(corr, corr.T, atol=1e-15)
    assert (np.abs(corr) <= 1.0 + 1e-12).all()
    assert np.allclose(np.diag(corr), 1.0)


def test_correlation_needs_two_samples():
    with pytest.raises(ValueError):
        correlation_matrix(np.ones((1, 3)))


# --- selection ---------------------------------------------------------------------

def test_select_keep_all_threshold_one_orders_by_score():
    scores = np.array([1.0, 5.0, 3.0])
    corr = np.eye(3)
    assert select_features(scores, corr, keep=3, corr_threshold=1.0) == [1, 2, 0]


def test_select_drops_perfectly_correlated_feature():
    scores = np.array([5.0, 4.0])
    corr = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert select_features(scores, corr, keep=2, corr_threshold=0.9) == [0]


def greedy_oracle(scores, corr, keep, threshold):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    chosen = []
    for i in order:
        if len(chosen) >= keep:
            break
        if all(abs(corr[i][j]) <= threshold for j in chosen):
            chosen.append(i)
    return chosen


def test_select_matches_greedy_oracle_on_random_instances():
    rng = np.random.default_rng(6)
    for _ in range(50):
        f = int(rng.integers(2, 10))
        A = rng.normal(size=(f, f))
        corr = np.corrcoef(A)
        scores = rng.uniform(0, 10, size=f).round(2)
        keep = int(rng.integers(1, f + 1))
        threshold = float(rng.uniform(0.2, 1.0))
        assert select_features(scores, corr, keep, threshold) == greedy_oracle(
            scores, corr, keep, threshold
        )


def test_select_independent_of_sample_order():
    rng = np.random.default_rng(7)
    X = rng.integers(0, 4, size=(60, 9)).astype(float)
    labels = rng.integers(0, 3, size=60)
    scores = chi_squared_scores(X, labels)
    corr = correlation_matrix(X)
    picked = select_features(scores, corr, keep=5, corr_threshold=0.9)
    perm = rng.permutation(60)
    scores2 = chi_squared_scores(X[perm], labels[perm])
    corr2 = correlation_matrix(X[perm])
    assert select_features(scores2, corr2, keep=5, corr_threshold=0.9) == picked


def test_select_validates_arguments():
    with pytest.raises(ValueError):
        select_features([1.0], np.eye(1), keep=0, corr_threshold=0.5)
    with pytest.raises(ValueError):
        select_features([1.0], np.eye(1), keep=1, corr_threshold=0.0)


# --- missing value ratio / persistence -----------------------------------------------

def test_missing_value_ratio_report():
    X = np.array([[0, 1], [0, 2], [3, 0], [0, 4]])
    ratios = missing_value_ratio(X)
    assert ratios.tolist() == [0.75, 0.25]


def test_feature_matrix_round_trip(tmp_path):
    X = np.array([[1, 2, 0], [0, 1, 5]])
    path = tmp_path / "matrix.tsv"
    write_feature_matrix(path, X, ["a", "b", "c"])
    loaded, terms = read_feature_matrix(path)
    assert terms == ["a", "b", "c"]
    assert np.array_equal(loaded, X.astype(float))
