"""End-to-end orchestration: preprocess, featurize, validate, route.

Holds the run configuration, the domain/plain featurization paths (the
plain path is the ablation baseline: bare tokens, no lexicon assists, no
score-based pruning), per-fold fit closures for cross-validation, and
model persistence with compatibility stamps.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import container, features, metrics, router, textprep, validator
from .lexicon import Lexicon, default_lexicon_text, parse_lexicon
from .records import DEPARTMENTS, RELATIONS, DataError, ServiceRecord, split_folds
from .textprep import ADVERB, NOUN, NUMBER, VERB, TaggedToken

_PLAIN_WORD = re.compile(r"\S+")
_PLAIN_LEX = Lexicon()  # empty: generic suffix stripping only


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    lexicon_path: str | None = None
    weights_path: str | None = None
    top_k: int = 200
    chi2_keep: int = 300
    corr_threshold: float = 0.95
    token_vocab_size: int = 5000
    folds: int = 10
    domain_nlp_enabled: bool = True
    validation_enabled: bool = True
    include_vague_department: bool = False
    router_kind: str = "gtb"
    router_params: dict = field(default_factory=dict)
    net: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise DataError("unknown config keys: " + ", ".join(sorted(extra)))
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON config: {e}") from e
        if not isinstance(obj, dict):
            raise DataError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "lexicon_path": self.lexicon_path,
            "weights_path": self.weights_path,
            "top_k": self.top_k,
            "chi2_keep": self.chi2_keep,
            "corr_threshold": self.corr_threshold,
            "token_vocab_size": self.token_vocab_size,
            "folds": self.folds,
            "domain_nlp_enabled": self.domain_nlp_enabled,
            "validation_enabled": self.validation_enabled,
            "include_vague_department": self.include_vague_department,
            "router_kind": self.router_kind,
            "router_params": dict(self.router_params),
            "net": dict(self.net),
            "synth": dict(self.synth),
        }

    def net_config(self) -> validator.NetConfig:
        base = validator.NetConfig().to_dict()
        base.update(self.net)
        base["seed"] = seed_for(self.seed, "net")
        return validator.NetConfig.from_dict(base)

    def lexicon_text(self) -> str:
        if self.lexicon_path is None:
            return default_lexicon_text()
        with open(self.lexicon_path, "r", encoding="utf-8") as fh:
            return fh.read()

    def lexicon(self) -> Lexicon:
        return parse_lexicon(self.lexicon_text())

    def weights(self) -> dict[str, float]:
        return metrics.load_weights(self.weights_path)

    def department_classes(self) -> tuple[str, ...]:
        if self.include_vague_department:
            return DEPARTMENTS
        return tuple(d for d in DEPARTMENTS if d != "Vague")

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        digest = hashlib.sha256()
        digest.update(payload)
        digest.update(self.lexicon_text().encode("utf-8"))
        weights = self.weights()
        digest.update(json.dumps(sorted(weights.items())).encode("utf-8"))
        return digest.hexdigest()[:16]

    def featurization_hash(self) -> str:
        """Stamp for model/corpus compatibility checks at eval and route time."""
        digest = hashlib.sha256()
        digest.update(self.lexicon_text().encode("utf-8"))
        digest.update(
            json.dumps(
                {
                    "domain_nlp_enabled": self.domain_nlp_enabled,
                    "top_k": self.top_k,
                    "chi2_keep": self.chi2_keep,
                    "corr_threshold": self.corr_threshold,
                    "token_vocab_size": self.token_vocab_size,
                },
                sort_keys=True,
            ).encode("utf-8")
        )
        return digest.hexdigest()[:16]


def seed_for(seed: int, name: str) -> int:
    """Named sub-seed so each stage is independently reproducible."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 62)


# --- featurization paths ------------------------------------------------------

def _plain_suffix_tag(word: str) -> str:
    if any(ch.isdigit() for ch in word):
        return NUMBER
    if word.endswith("ly") and len(word) > 3:
        return ADVERB
    if (word.endswith("ed") or word.endswith("ing")) and len(word) > 4:
        return VERB
    return NOUN


def _plain_tokens(text: str, stop_words) -> list[TaggedToken]:
    """Ablation-baseline tokens: bare whitespace split, generic stemming only."""
    tokens = []
    for m in _PLAIN_WORD.finditer(text.lower()):
        word = m.group(0)
        if word in stop_words:
            continue
        tag = _plain_suffix_tag(word)
        tokens.append(
            TaggedToken(textprep.lemmatize(word, _PLAIN_LEX), tag, (m.start(), m.end()))
        )
    return tokens


def record_document(rec: ServiceRecord, lex: Lexicon, domain_nlp: bool):
    """Tagged segments used for count features (call log first, then detail)."""
    if domain_nlp:
        return textprep.preprocess_text(rec.call_log, lex) + textprep.preprocess_text(
            rec.detail, lex
        )
    segments = []
    for part in (rec.call_log, rec.detail):
        tokens = _plain_tokens(part, lex.stop_words)
        if tokens:
            segments.append(tokens)
    return segments


def record_pair(rec: ServiceRecord, lex: Lexicon, domain_nlp: bool):
    """(call tokens, detail tokens) text lists for the validation network."""
    if domain_nlp:
        call = [t.text for seg in textprep.preprocess_text(rec.call_log, lex) for t in seg]
        detail = [t.text for seg in textprep.preprocess_text(rec.detail, lex) for t in seg]
    else:
        call = [t.text for t in _plain_tokens(rec.call_log, lex.stop_words)]
        detail = [t.text for t in _plain_tokens(rec.detail, lex.stop_words)]
    return call, detail


class Featurizer:
    """Per-run memo of the pure preprocessing results.

    Cross-validation refits touch each record many times; tokenization is
    pure in (record, lexicon, flags), so one cache per run is safe and keeps
    repeated folds from re-tokenizing the corpus.
    """

    def __init__(self, config: PipelineConfig, lex: Lexicon):
        self.config = config
        self.lex = lex
        self._pairs: dict = {}
        self._docs: dict = {}

    def pair(self, rec: ServiceRecord):
        got = self._pairs.get(rec)
        if got is None:
            got = record_pair(rec, self.lex, self.config.domain_nlp_enabled)
            self._pairs[rec] = got
        return got

    def document(self, rec: ServiceRecord):
        got = self._docs.get(rec)
        if got is None:
            got = record_document(rec, self.lex, self.config.domain_nlp_enabled)
            self._docs[rec] = got
        return got


# --- validator stage ----------------------------------------------------------

def train_validator_stage(records, featurizer: Featurizer):
    """Token vocabulary and network trained on the given records only."""
    config = featurizer.config
    labeled = [r for r in records if r.relation in RELATIONS]
    if not labeled:
        raise DataError("no relation-labeled records to train the validator")
    pairs_text = [featurizer.pair(r) for r in labeled]
    vocab = validator.build_token_vocab(
        [c + d for c, d in pairs_text], max_size=config.token_vocab_size
    )
    pairs = [validator.encode_pair(c, d, vocab) for c, d in pairs_text]
    labels = [RELATIONS.index(r.relation) for r in labeled]
    net_cfg = config.net_config()
    model, history = validator.train_validator(pairs, labels, net_cfg, vocab)
    return model, history


def validator_predict(model, records, featurizer: Featurizer):
    pairs_text = [featurizer.pair(r) for r in records]
    pairs = [validator.encode_pair(c, d, model.vocab) for c, d in pairs_text]
    probs = validator.predict_proba(model, pairs)
    labels = [RELATIONS[i] for i in probs.argmax(axis=1)]
    return labels, probs


def validator_fit_factory(featurizer: Featurizer):
    def fit(train_records):
        model, _history = train_validator_stage(train_records, featurizer)

        def predict(test_records):
            return validator_predict(model, test_records, featurizer)

        return predict

    return fit


# --- router stage -------------------------------------------------------------

@dataclass
class RouterStage:
    model: object
    vocabulary: features.Vocabulary
    classes: tuple


def routing_records(records, config: PipelineConfig):
    """Records eligible for router training/evaluation (ground-truth Valid)."""
    classes = set(config.department_classes())
    out = []
    for r in records:
        if r.relation != "Valid":
            continue
        if r.department in classes:
            out.append(r)
    return out


def train_router_stage(records, featurizer: Featurizer) -> RouterStage:
    """Vocabulary, score-based pruning, and router fit on the given records."""
    config = featurizer.config
    classes = config.department_classes()
    docs = [featurizer.document(r) for r in records]
    vocab = features.build_vocabulary(docs, top_k=config.top_k)
    if len(vocab) == 0:
        raise DataError("empty feature vocabulary; corpus too small")
    y = np.array([classes.index(r.department) for r in records], dtype=np.int64)
    X = features.featurize_corpus(docs, vocab)
    if config.domain_nlp_enabled and config.chi2_keep and config.chi2_keep < len(vocab):
        scores = features.chi_squared_scores(X, y)
        corr = features.correlation_matrix(X) if X.shape[0] >= 2 else None
        if corr is None:
            keep = sorted(range(len(vocab)), key=lambda i: (-scores[i], i))[: config.chi2_keep]
        else:
            keep = features.select_features(
                scores, corr, keep=config.chi2_keep, corr_threshold=config.corr_threshold
            )
        keep = sorted(keep)
        vocab = vocab.subset(keep)
        X = X[:, keep]
    params = dict(config.router_params)
    trainer = router.TRAINERS.get(config.router_kind)
    if trainer is None:
        raise DataError(f"unknown router kind {config.router_kind!r}")
    if config.router_kind in ("random_forest", "gtb", "svm"):
        params.setdefault("seed", seed_for(config.seed, "router"))
    model = trainer(X.astype(np.float64), y, n_classes=len(classes), **params)
    return RouterStage(model=model, vocabulary=vocab, classes=classes)


def router_predict(stage: RouterStage, records, featurizer: Featurizer):
    docs = [featurizer.document(r) for r in records]
    X = features.featurize_corpus(docs, stage.vocabulary).astype(np.float64)
    labels_idx, scores = router.predict_batch(stage.model, X)
    labels = [stage.classes[i] for i in labels_idx]
    return labels, scores


def router_fit_factory(featurizer: Featurizer):
    def fit(train_records):
        stage = train_router_stage(train_records, featurizer)

        def predict(test_records):
            return router_predict(stage, test_records, featurizer)

        return predict

    return fit


# --- evaluation ---------------------------------------------------------------

def evaluate_validator(records, config: PipelineConfig, lex: Lexicon, featurizer=None):
    featurizer = featurizer or Featurizer(config, lex)
    labeled = [r for r in records if r.relation in RELATIONS]
    folds = split_folds(labeled, config.folds, seed_for(config.seed, "folds"))
    return metrics.cross_validate(
        validator_fit_factory(featurizer),
        labeled,
        folds,
        label_fn=lambda r: r.relation,
        classes=RELATIONS,
        weights=None,
        positive_class="Valid",
    )


def evaluate_router(records, config: PipelineConfig, lex: Lexicon, featurizer=None):
    featurizer = featurizer or Featurizer(config, lex)
    if config.validation_enabled:
        eligible = routing_records(records, config)
    else:
        classes = set(config.department_classes())
        eligible = [r for r in records if r.department in classes]
    if len(eligible) < config.folds:
        raise DataError(
            f"only {len(eligible)} routable records for {config.folds}-fold evaluation"
        )
    folds = split_folds(eligible, config.folds, seed_for(config.seed, "folds"))
    weights = config.weights()
    return metrics.cross_validate(
        router_fit_factory(featurizer),
        eligible,
        folds,
        label_fn=lambda r: r.department,
        classes=config.department_classes(),
        weights=weights,
    )


# --- persistence --------------------------------------------------------------

VALIDATOR_FILE = "validator.model"
ROUTER_FILE = "router.model"
VOCAB_FILE = "vocabulary.tsv"


def atomic_write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_models(
    out_dir, config: PipelineConfig, validator_model, router_stage: RouterStage
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    stamp = {
        "fingerprint": config.fingerprint(),
        "seed": config.seed,
        "featurization_hash": config.featurization_hash(),
    }
    meta, arrays = validator.model_payload(validator_model)
    meta.update(stamp)
    tmp = os.path.join(out_dir, VALIDATOR_FILE + ".tmp")
    container.write_container(tmp, meta, arrays)
    os.replace(tmp, os.path.join(out_dir, VALIDATOR_FILE))

    meta, arrays = router.model_payload(router_stage.model)
    meta.update(stamp)
    meta["classes"] = list(router_stage.classes)
    meta["vocab_hash"] = hashlib.sha256(
        "\n".join(router_stage.vocabulary.to_lines()).encode("utf-8")
    ).hexdigest()[:16]
    tmp = os.path.join(out_dir, ROUTER_FILE + ".tmp")
    container.write_container(tmp, meta, arrays)
    os.replace(tmp, os.path.join(out_dir, ROUTER_FILE))

    stamp_header = (
        f"# fingerprint = {stamp['fingerprint']}\n# seed = {stamp['seed']}\n"
    )
    atomic_write_text(
        os.path.join(out_dir, VOCAB_FILE),
        stamp_header + "\n".join(router_stage.vocabulary.to_lines()) + "\n",
    )


@dataclass
class LoadedModels:
    validator_model: object
    router_stage: RouterStage
    stamp: dict


def load_models(model_dir, expected_featurization: str | None = None) -> LoadedModels:
    vpath = os.path.join(model_dir, VALIDATOR_FILE)
    rpath = os.path.join(model_dir, ROUTER_FILE)
    for p in (vpath, rpath):
        if not os.path.exists(p):
            raise DataError(f"missing model file {p}")
    vmeta, varrays = container.read_container(vpath)
    rmeta, rarrays = container.read_container(rpath)
    if expected_featurization is not None:
        for meta, name in ((vmeta, "validator"), (rmeta, "router")):
            if meta.get("featurization_hash") != expected_featurization:
                raise DataError(
                    f"{name} model was trained with featurization "
                    f"{meta.get('featurization_hash')}, current config hashes to "
                    f"{expected_featurization}; refusing to mix them"
                )
    vocab = features.Vocabulary.load(os.path.join(model_dir, VOCAB_FILE))
    vocab_hash = hashlib.sha256(
        "\n".join(vocab.to_lines()).encode("utf-8")
    ).hexdigest()[:16]
    if rmeta.get("vocab_hash") != vocab_hash:
        raise DataError("router model does not match the stored vocabulary file")
    vmodel = validator.model_from_payload(vmeta, varrays)
    rmodel = router.model_from_payload(rmeta, rarrays)
    stage = RouterStage(
        model=rmodel, vocabulary=vocab, classes=tuple(rmeta["classes"])
    )
    return LoadedModels(
        validator_model=vmodel,
        router_stage=stage,
        stamp={k: vmeta.get(k) for k in ("fingerprint", "seed", "featurization_hash")},
    )


# --- routing decisions --------------------------------------------------------

@dataclass
class RoutingDecision:
    record_id: str
    verdict: str
    relation_probs: list
    department: str | None
    department_scores: list | None
    fingerprint: str
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.record_id,
                "verdict": self.verdict,
                "relation_probs": self.relation_probs,
                "department": self.department,
                "department_scores": self.department_scores,
                "fingerprint": self.fingerprint,
                "error": self.error,
            },
            ensure_ascii=False,
        )

    def to_text(self) -> str:
        dept = self.department if self.department is not None else "-"
        err = f"\terror={self.error}" if self.error else ""
        return f"{self.record_id}\t{self.verdict}\t{dept}{err}"


def route_records(
    records, models: LoadedModels, config: PipelineConfig, lex: Lexicon
) -> list[RoutingDecision]:
    """One decision per record; non-Valid verdicts never carry a department."""
    featurizer = Featurizer(config, lex)
    fingerprint = models.stamp.get("fingerprint") or ""
    decisions = []
    valid_idx = []
    rel_labels, rel_probs = (
        validator_predict(models.validator_model, records, featurizer)
        if records
        else ([], np.zeros((0, 3)))
    )
    for i, rec in enumerate(records):
        verdict = rel_labels[i]
        decisions.append(
            RoutingDecision(
                record_id=rec.id,
                verdict=verdict,
                relation_probs=[round(float(v), 6) for v in rel_probs[i]],
                department=None,
                department_scores=None,
                fingerprint=fingerprint,
            )
        )
        if verdict == "Valid":
            valid_idx.append(i)
    if valid_idx:
        subset = [records[i] for i in valid_idx]
        dept_labels, dept_scores = router_predict(
            models.router_stage, subset, featurizer
        )
        for j, i in enumerate(valid_idx):
            decisions[i].department = dept_labels[j]
            decisions[i].department_scores = [
                round(float(v), 6) for v in dept_scores[j]
            ]
    return decisions
