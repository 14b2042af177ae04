"""Command-line front end: synth, train, eval, route, inspect-lexicon.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import features, metrics, pipeline, plots, synth
from . import lexicon as lexicon_mod
from .records import (
    DataError,
    NumericError,
    parse_records,
    read_records,
    write_ground_truth,
    write_records,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="svctriage", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p, fmt=False):
        p.add_argument("--config", metavar="PATH", help="pipeline config JSON")
        p.add_argument("--seed", type=int, metavar="N", help="override the config seed")
        p.add_argument(
            "--ablate-domain-nlp", action="store_true",
            help="disable lexicon-based preprocessing and score pruning",
        )
        p.add_argument(
            "--no-validation", action="store_true",
            help="route/evaluate all records instead of validated ones",
        )
        p.add_argument("--out", metavar="DIR", help="output directory")
        if fmt:
            p.add_argument(
                "--format", choices=("text", "json-lines"), default="json-lines",
            )

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    common(p_synth)

    p_train = sub.add_parser("train", help="train validator and router models")
    common(p_train)
    p_train.add_argument("corpus", help="record file (one JSON object per line)")

    p_eval = sub.add_parser("eval", help="cross-validated evaluation reports")
    common(p_eval)
    p_eval.add_argument("corpus", help="labeled record file")
    p_eval.add_argument("--models", required=True, metavar="DIR", help="trained model directory")

    p_route = sub.add_parser("route", help="validate and route a record stream")
    common(p_route, fmt=True)
    p_route.add_argument("records", help="record file, or - for stdin")
    p_route.add_argument("--models", required=True, metavar="DIR", help="trained model directory")

    p_lex = sub.add_parser("inspect-lexicon", help="summarize the active lexicon")
    common(p_lex)
    return parser


def _load_config(args) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        config = pipeline.PipelineConfig.from_file(args.config)
    else:
        config = pipeline.PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "ablate_domain_nlp", False):
        config = replace(config, domain_nlp_enabled=False)
    if getattr(args, "no_validation", False):
        config = replace(config, validation_enabled=False)
    return config


def _out_dir(args, default: str) -> str:
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _header(config: pipeline.PipelineConfig) -> str:
    return f"# fingerprint = {config.fingerprint()}\n# seed = {config.seed}\n"


def cmd_synth(args) -> int:
    config = _load_config(args)
    synth_params = dict(config.synth)
    synth_params.setdefault("n_records", 1000)
    synth_params["seed"] = pipeline.seed_for(config.seed, "corpus")
    try:
        scfg = synth.SynthConfig(**synth_params)
        recs, truth = synth.generate_corpus(scfg)
    except (TypeError, ValueError) as e:
        raise DataError(str(e)) from e
    out = _out_dir(args, "synth-out")
    stamp = f"fingerprint = {config.fingerprint()}\nseed = {config.seed}"
    corpus_path = os.path.join(out, "corpus.jsonl")
    truth_path = os.path.join(out, "truth.tsv")
    write_records(corpus_path + ".tmp", recs, header=stamp)
    os.replace(corpus_path + ".tmp", corpus_path)
    write_ground_truth(truth_path + ".tmp", truth, header=stamp)
    os.replace(truth_path + ".tmp", truth_path)
    pipeline.atomic_write_text(
        os.path.join(out, "synth_manifest.txt"),
        _header(config) + f"records = {len(recs)}\n",
    )
    print(f"wrote {len(recs)} records to {corpus_path}")
    return 0


def _read_corpus(path):
    if not os.path.exists(path):
        raise DataError(f"corpus file not found: {path}")
    recs, issues = read_records(path)
    if issues:
        preview = "; ".join(f"line {i.line}: {i.message}" for i in issues[:5])
        raise DataError(f"{len(issues)} malformed records in {path} ({preview})")
    if not recs:
        raise DataError(f"no records in {path}")
    return recs


def cmd_train(args) -> int:
    config = _load_config(args)
    lex = config.lexicon()
    recs = _read_corpus(args.corpus)
    out = _out_dir(args, "models")

    featurizer = pipeline.Featurizer(config, lex)
    vmodel, history = pipeline.train_validator_stage(recs, featurizer)
    route_train = pipeline.routing_records(recs, config)
    if not route_train:
        raise DataError("no ground-truth Valid records to train the router")
    stage = pipeline.train_router_stage(route_train, featurizer)
    pipeline.save_models(out, config, vmodel, stage)

    fingerprint = config.fingerprint()
    if history:
        plots.save_training_curves(
            history, os.path.join(out, "training_curves.png"), fingerprint
        )
    # training-set agreement only; cross-validated numbers come from `eval`
    rel_pred, _ = pipeline.validator_predict(vmodel, recs, featurizer)
    rel_true = [r.relation for r in recs]
    rel_acc = float(np.mean([p == t for p, t in zip(rel_pred, rel_true)]))
    dep_pred, _ = pipeline.router_predict(stage, route_train, featurizer)
    dep_acc = float(np.mean([p == r.department for p, r in zip(dep_pred, route_train)]))
    report = (
        _header(config)
        + "# training-set metrics (optimistic; run eval for cross-validated numbers)\n"
        + f"validator_training_agreement = {rel_acc:.4f}\n"
        + f"router_training_agreement = {dep_acc:.4f}\n"
        + f"records = {len(recs)}\n"
        + f"routing_records = {len(route_train)}\n"
    )
    pipeline.atomic_write_text(os.path.join(out, "train_report.txt"), report)
    print(f"models written to {out}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    lex = config.lexicon()
    recs = _read_corpus(args.corpus)
    pipeline.load_models(args.models, expected_featurization=config.featurization_hash())
    out = _out_dir(args, "eval-out")
    fingerprint = config.fingerprint()

    featurizer = pipeline.Featurizer(config, lex)
    val_report = pipeline.evaluate_validator(recs, config, lex, featurizer)
    pipeline.atomic_write_text(
        os.path.join(out, "validation_report.txt"), _header(config) + val_report.to_text()
    )
    if val_report.roc_curves:
        plots.save_roc_curves(
            val_report.roc_curves, os.path.join(out, "validation_roc.png"), fingerprint
        )
        for cls, curve in val_report.roc_curves.items():
            metrics.write_roc_points(
                os.path.join(out, f"roc_validation_{cls}.tsv"), curve,
                comment=f"fingerprint = {fingerprint}; seed = {config.seed}",
            )

    route_report = pipeline.evaluate_router(recs, config, lex, featurizer)
    pipeline.atomic_write_text(
        os.path.join(out, "routing_report.txt"), _header(config) + route_report.to_text()
    )
    if route_report.roc_curves:
        plots.save_roc_curves(
            route_report.roc_curves, os.path.join(out, "routing_roc.png"), fingerprint
        )
        for cls, curve in route_report.roc_curves.items():
            metrics.write_roc_points(
                os.path.join(out, f"roc_routing_{cls}.tsv"), curve,
                comment=f"fingerprint = {fingerprint}; seed = {config.seed}",
            )

    _feature_figures(recs, config, lex, out, fingerprint)
    print(f"validator weighted accuracy = {val_report.accuracy:.4f}")
    print(f"router weighted accuracy = {route_report.accuracy:.4f}")
    print(f"reports written to {out}")
    return 0


def _feature_figures(recs, config, lex, out, fingerprint) -> None:
    routable = pipeline.routing_records(recs, config)
    if len(routable) < 2:
        return
    featurizer = pipeline.Featurizer(config, lex)
    docs = [featurizer.document(r) for r in routable]
    vocab = features.build_vocabulary(docs, top_k=config.top_k)
    if len(vocab) == 0:
        return
    X = features.featurize_corpus(docs, vocab)
    classes = config.department_classes()
    y = np.array([classes.index(r.department) for r in routable])
    scores = features.chi_squared_scores(X, y)
    plots.save_chi2_bars(vocab.terms(), scores, os.path.join(out, "chi2_top.png"), fingerprint)
    top = np.argsort(scores)[::-1][:10]
    corr = features.correlation_matrix(X[:, top])
    plots.save_correlation_heatmap(
        corr, [vocab.terms()[i] for i in top],
        os.path.join(out, "correlation_heatmap.png"), fingerprint,
    )


def cmd_route(args) -> int:
    config = _load_config(args)
    lex = config.lexicon()
    models = pipeline.load_models(
        args.models, expected_featurization=config.featurization_hash()
    )
    if args.records == "-":
        lines = sys.stdin.read().splitlines()
    else:
        if not os.path.exists(args.records):
            raise DataError(f"record file not found: {args.records}")
        with open(args.records, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()

    out_fh = sys.stdout
    close = False
    final_path = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        final_path = os.path.join(args.out, "decisions.jsonl")
        out_fh = open(final_path + ".tmp", "w", encoding="utf-8")
        close = True
    try:
        decisions = []
        order = []
        good = []
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            recs, issues = parse_records([line])
            if issues:
                decisions.append(
                    pipeline.RoutingDecision(
                        record_id=f"line{lineno}", verdict="Error",
                        relation_probs=[], department=None, department_scores=None,
                        fingerprint=models.stamp.get("fingerprint") or "",
                        error=issues[0].message,
                    )
                )
                order.append(("bad", len(decisions) - 1))
            else:
                good.append(recs[0])
                order.append(("good", len(good) - 1))
        routed = pipeline.route_records(good, models, config, lex)
        merged = []
        for kind, i in order:
            merged.append(decisions[i] if kind == "bad" else routed[i])
        for d in merged:
            out_fh.write(d.to_json() + "\n" if args.format == "json-lines" else d.to_text() + "\n")
    finally:
        if close:
            out_fh.close()
            os.replace(final_path + ".tmp", final_path)
    return 0


def cmd_inspect_lexicon(args) -> int:
    config = _load_config(args)
    lex = config.lexicon()
    print(lexicon_mod.describe(lex))
    print()
    print("sample abbreviations:")
    for surface in sorted(lex.abbreviations)[:10]:
        print(f"  {surface} -> {lex.abbreviations[surface]}")
    print("multiword expressions:")
    for pattern in lex.mwe_patterns:
        print("  " + " ".join(pattern))
    print("vague phrases:")
    for phrase in lex.vague_phrases:
        print("  " + phrase)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "route": cmd_route,
    "inspect-lexicon": cmd_inspect_lexicon,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1
    try:
        return _COMMANDS[args.command](args)
    except DataError as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2
    except (NumericError, FloatingPointError) as e:
        sys.stderr.write(f"numeric failure: {e}\n")
        return 3
    except lexicon_mod.LexiconError as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2
    except metrics.MetricsError as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
