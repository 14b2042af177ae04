"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured value next to its threshold."""

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from svctriage import features, lexicon, metrics, pipeline, synth, validator
from svctriage.cli import main as cli_main
from svctriage.router import predict_batch, train_decision_tree, train_gtb, train_random_forest

from test_router import oracle_tree, random_dataset, trees_equal


def report(criterion, passed, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, detail


# --- 1. gradient correctness ----------------------------------------------------

def test_criterion_1_gradient_correctness():
    config = validator.NetConfig(
        seq_len=60, embed_dim=32, filter_sizes=(2, 3, 4), filters_per_size=24,
        lstm_hidden=16, dense_dim=24, dropout_p=0.0, classes=3,
        batch_size=8, epochs=0, learning_rate=0.05, seed=11,
    )
    vocab = validator.TokenVocab([f"term{i}" for i in range(40)])
    model = validator.init_model(config, vocab)
    pair = ([3, 4, 5, 6], [7, 8, 9, 10, 11, 12])  # ten tokens
    start = time.time()
    err = validator.grad_check(model, pair, label=1, epsilon=1e-5, n_samples=200, seed=5)
    elapsed = time.time() - start
    report(
        "1 gradient-correctness",
        err <= 1e-4 and elapsed < 60.0,
        f"max rel err {err:.3e} <= 1e-4, runtime {elapsed:.1f}s < 60s",
    )


# --- 2. metric oracles -----------------------------------------------------------

def _oracle_weighted_accuracy(counts, weights):
    present = [i for i in range(len(counts)) if sum(counts[i]) > 0]
    total_w = sum(weights[i] for i in present)
    acc = 0.0
    for i in present:
        acc += (weights[i] / total_w) * (counts[i][i] / sum(counts[i]))
    return acc


def _oracle_basic(counts, pos):
    g = len(counts)
    tp = counts[pos][pos]
    fn = sum(counts[pos]) - tp
    fp = sum(counts[r][pos] for r in range(g)) - tp
    tn = sum(sum(row) for row in counts) - tp - fn - fp

    def rate(a, b):
        return a / b if b else 0.0

    sens = rate(tp, tp + fn)
    spec = rate(tn, tn + fp)
    prec = rate(tp, tp + fp)
    f = rate(2 * prec * sens, prec + sens)
    return sens, spec, prec, f


def _oracle_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def _oracle_pearson(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    if va == 0 or vb == 0:
        return 0.0
    return cov / (va ** 0.5 * vb ** 0.5)


def test_criterion_2_metric_oracles():
    from test_features import brute_force_chi2

    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        g = int(rng.integers(2, 6))
        counts = rng.integers(0, 9, size=(g, g))
        if counts.sum() == 0:
            counts[0, 0] = 1
        weights = rng.uniform(0.1, 1.0, size=g)
        weights /= weights.sum()
        conf = metrics.ConfusionMatrix(tuple(range(g)), counts.astype(np.int64))
        got = metrics.weighted_accuracy(conf, {i: weights[i] for i in range(g)})
        want = _oracle_weighted_accuracy(counts.tolist(), weights.tolist())
        worst = max(worst, abs(got - want))

        pos = int(rng.integers(0, g))
        m = metrics.basic_metrics(conf, pos)
        o = _oracle_basic(counts.tolist(), pos)
        worst = max(
            worst,
            abs(m.sensitivity - o[0]), abs(m.specificity - o[1]),
            abs(m.precision - o[2]), abs(m.f_score - o[3]),
        )

        n = int(rng.integers(4, 30))
        scores = rng.choice([0.1, 0.25, 0.5, 0.5, 0.75, 0.9], size=n)
        labels = rng.random(n) < 0.5
        if 0 < labels.sum() < n:
            got_auc = metrics.roc_auc(scores, labels).auc
            worst = max(worst, abs(got_auc - _oracle_auc(scores.tolist(), labels.tolist())))

        X = rng.integers(0, 4, size=(int(rng.integers(3, 25)), int(rng.integers(1, 6))))
        y = rng.integers(0, int(rng.integers(2, 5)), size=X.shape[0])
        chi_got = features.chi_squared_scores(X, y)
        chi_want = brute_force_chi2(X > 0, y.tolist())
        worst = max(worst, float(np.abs(chi_got - chi_want).max()))

        M = rng.normal(size=(int(rng.integers(2, 20)), 2))
        corr_got = features.correlation_matrix(M)[0, 1]
        corr_want = _oracle_pearson(M[:, 0].tolist(), M[:, 1].tolist())
        worst = max(worst, abs(corr_got - corr_want))

    report("2 metric-oracles", worst <= 1e-9, f"worst |delta| {worst:.2e} <= 1e-9 over 100 instances")


# --- 3. weighted-accuracy worked example -------------------------------------------

def test_criterion_3_worked_example():
    weights = metrics.load_weights()  # shipped table
    conf = metrics.confusion(
        ["Boom"] * 4 + ["Controls"] * 2,
        ["Boom", "Boom", "Boom", "Controls", "Controls", "Boom"],
        ("Boom", "Controls"),
    )
    value = metrics.weighted_accuracy(conf, weights)
    report(
        "3 weighted-accuracy-example",
        abs(value - 0.6602) <= 1e-4,
        f"value {value:.6f} within 1e-4 of 0.6602",
    )


# --- 4. decision-tree oracle equivalence ---------------------------------------------

def test_criterion_4_decision_tree_oracle():
    rng = np.random.default_rng(404)
    cases = 0
    for _ in range(50):
        X, y = random_dataset(rng, max_n=30, max_f=5)
        max_depth = int(rng.integers(1, 6))
        min_leaf = int(rng.integers(1, 3))
        model = train_decision_tree(X, y, max_depth=max_depth, min_leaf=min_leaf)
        want = oracle_tree(X, y, model.n_classes, 0, max_depth, min_leaf)
        assert trees_equal(model.root, want), f"mismatch on case {cases}"
        cases += 1
    report("4 decision-tree-oracle", cases >= 50, f"{cases} random cases identical to exhaustive search")


# --- 5. boosting loss monotonicity ----------------------------------------------------

def test_criterion_5_gtb_monotonicity():
    rng = np.random.default_rng(505)
    worst = -np.inf
    for _ in range(20):
        n = int(rng.integers(15, 90))
        X = rng.normal(size=(n, int(rng.integers(2, 7))))
        y = rng.integers(0, int(rng.integers(2, 6)), size=n)
        lr = float(rng.uniform(0.05, 0.6))
        model = train_gtb(X, y, n_stages=20, learning_rate=lr, max_depth=int(rng.integers(1, 4)))
        worst = max(worst, float(np.diff(np.array(model.train_loss)).max()))
    report("5 gtb-monotonicity", worst <= 1e-12, f"max per-stage loss increase {worst:.2e} <= 1e-12")


# --- 6. end-to-end synthetic performance ----------------------------------------------

ACCEPT_CONFIG = pipeline.PipelineConfig(
    seed=5,
    top_k=120,
    chi2_keep=150,
    corr_threshold=0.95,
    token_vocab_size=3000,
    folds=10,
    router_kind="gtb",
    router_params={"n_stages": 25, "learning_rate": 0.4, "max_depth": 3},
    net={
        "seq_len": 24, "embed_dim": 20, "filter_sizes": [2, 3, 4],
        "filters_per_size": 16, "lstm_hidden": 16, "dense_dim": 24,
        "dropout_p": 0.1, "batch_size": 64, "epochs": 6, "learning_rate": 0.15,
    },
)


def test_criterion_6_end_to_end_synthetic():
    start = time.time()
    corpus_cfg = synth.SynthConfig(
        n_records=10000, seed=42, noise_rate=0.05, abbreviation_rate=0.3
    )
    records, _truth = synth.generate_corpus(corpus_cfg)
    lex = lexicon.default_lexicon()
    featurizer = pipeline.Featurizer(ACCEPT_CONFIG, lex)

    val_report = pipeline.evaluate_validator(records, ACCEPT_CONFIG, lex, featurizer)
    route_report = pipeline.evaluate_router(records, ACCEPT_CONFIG, lex, featurizer)
    elapsed = time.time() - start
    ok = (
        val_report.accuracy >= 0.90
        and route_report.accuracy >= 0.85
        and elapsed <= 900.0
    )
    report(
        "6 end-to-end-synthetic",
        ok,
        f"validator {val_report.accuracy:.4f} >= 0.90, "
        f"gtb routing {route_report.accuracy:.4f} >= 0.85, "
        f"runtime {elapsed:.0f}s <= 900s",
    )


# --- 7. ablation direction --------------------------------------------------------------

def test_criterion_7_ablation_direction():
    corpus_cfg = synth.SynthConfig(
        n_records=3000, seed=77, noise_rate=0.05, abbreviation_rate=0.75
    )
    records, _ = synth.generate_corpus(corpus_cfg)
    lex = lexicon.default_lexicon()
    base = replace(
        ACCEPT_CONFIG, folds=3, top_k=60, chi2_keep=150,
        router_params={"n_stages": 25, "learning_rate": 0.4, "max_depth": 3},
    )
    accuracies = {}
    for domain in (True, False):
        config = replace(base, domain_nlp_enabled=domain)
        rep = pipeline.evaluate_router(records, config, lex)
        accuracies[domain] = rep.accuracy
    gap = accuracies[True] - accuracies[False]
    report(
        "7 ablation-direction",
        gap >= 0.10,
        f"domain {accuracies[True]:.4f} vs ablated {accuracies[False]:.4f}, gap {gap:.4f} >= 0.10",
    )


# --- 8. forest variance reduction ----------------------------------------------------------

def test_criterion_8_forest_variance():
    lex = lexicon.default_lexicon()
    config = pipeline.PipelineConfig(seed=0, top_k=40)
    classes = config.department_classes()
    dt_accs, rf_accs = [], []
    for seed in range(10):
        corpus_cfg = synth.SynthConfig(
            n_records=400, seed=1000 + seed, noise_rate=0.4, abbreviation_rate=0.5
        )
        records, _ = synth.generate_corpus(corpus_cfg)
        featurizer = pipeline.Featurizer(config, lex)
        eligible = pipeline.routing_records(records, config)
        docs = [featurizer.document(r) for r in eligible]
        vocab = features.build_vocabulary(docs, top_k=40)
        X = features.featurize_corpus(docs, vocab).astype(float)
        y = np.array([classes.index(r.department) for r in eligible])
        order = np.random.default_rng(seed).permutation(len(y))
        n_test = len(y) // 3
        test_idx, train_idx = order[:n_test], order[n_test:]
        dt = train_decision_tree(
            X[train_idx], y[train_idx], max_depth=20, min_leaf=2, n_classes=len(classes)
        )
        rf = train_random_forest(
            X[train_idx], y[train_idx], n_trees=50, max_depth=20, min_leaf=2,
            seed=seed, n_classes=len(classes),
        )
        dt_accs.append(float((predict_batch(dt, X[test_idx])[0] == y[test_idx]).mean()))
        rf_accs.append(float((predict_batch(rf, X[test_idx])[0] == y[test_idx]).mean()))
    dt_std = float(np.std(dt_accs))
    rf_std = float(np.std(rf_accs))
    report(
        "8 forest-variance",
        rf_std < dt_std,
        f"rf std {rf_std:.4f} < single-tree std {dt_std:.4f} over 10 seeds",
    )


# --- 9. determinism ---------------------------------------------------------------------------

DETERMINISM_CONFIG = {
    "seed": 23,
    "top_k": 40,
    "chi2_keep": 120,
    "corr_threshold": 0.95,
    "token_vocab_size": 800,
    "folds": 3,
    "router_kind": "gtb",
    "router_params": {"n_stages": 6, "learning_rate": 0.4, "max_depth": 3},
    "net": {
        "seq_len": 20, "embed_dim": 10, "filter_sizes": [2, 3],
        "filters_per_size": 6, "lstm_hidden": 6, "dense_dim": 10,
        "dropout_p": 0.1, "batch_size": 32, "epochs": 2, "learning_rate": 0.12,
    },
    "synth": {"n_records": 200, "noise_rate": 0.05, "abbreviation_rate": 0.3},
}


def _run_full_pipeline(root: Path, config_path: Path):
    data = root / "data"
    models = root / "models"
    evals = root / "eval"
    routes = root / "routes"
    assert cli_main(["synth", "--config", str(config_path), "--out", str(data)]) == 0
    assert cli_main(
        ["train", "--config", str(config_path), "--out", str(models), str(data / "corpus.jsonl")]
    ) == 0
    assert cli_main(
        ["eval", "--config", str(config_path), "--models", str(models),
         "--out", str(evals), str(data / "corpus.jsonl")]
    ) == 0
    assert cli_main(
        ["route", "--config", str(config_path), "--models", str(models),
         "--out", str(routes), str(data / "corpus.jsonl")]
    ) == 0
    files = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path != config_path:
            files[str(path.relative_to(root))] = path.read_bytes()
    return files


def test_criterion_9_determinism(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(DETERMINISM_CONFIG), encoding="utf-8")
    run_a = _run_full_pipeline(tmp_path / "a", config_path)
    run_b = _run_full_pipeline(tmp_path / "b", config_path)
    assert set(run_a) == set(run_b)
    different = [name for name in run_a if run_a[name] != run_b[name]]
    report(
        "9 determinism",
        not different,
        f"{len(run_a)} artifacts byte-identical across two full runs"
        + (f"; differing: {different}" if different else ""),
    )


# --- 10. preprocessing goldens ------------------------------------------------------------------

def test_criterion_10_textprep_goldens(lex):
    from svctriage import textprep

    checks = []
    checks.append(textprep.lemmatize("brk", lex) == "break")
    checks.append(textprep.lemmatize("breaking", lex) == "break")
    checks.append(textprep.lemmatize("broken", lex) == "break")
    checks.append(textprep.apply_stop_rules(["an", "50", "failed"], lex) == ["an50", "failed"])
    checks.append(
        [(t.text, t.n) for t in textprep.tokenize("upper valve leaking", lex)]
        == [("upper valve", 2), ("leaking", 1)]
    )
    checks.append(
        [(t.text, t.n) for t in textprep.tokenize("unit down", lex)] == [("unit down", 2)]
    )
    checks.append(textprep.strip_vague_phrases("service needed", lex) == ("", True))
    matches = textprep.recognize_terms("replaced gasket pn9700007824")
    checks.append([(m.kind, m.raw) for m in matches] == [("PartNumber", "pn9700007824")])
    checks.append(
        textprep.normalize("cut off and replaced damaged area or repair--perform test")
        == ["cut off and replaced damaged area or repair", "perform test"]
    )
    checks.append(textprep.normalize("Unit DWN--HYD inspected") == ["unit dwn", "hyd inspected"])
    matches = textprep.recognize_terms("24506-replace winch rope unit is down")
    checks.append([(m.kind, m.raw) for m in matches] == [("UnitNumber", "24506")])
    passed = sum(checks)
    report("10 textprep-goldens", all(checks), f"{passed}/{len(checks)} golden examples hold")
