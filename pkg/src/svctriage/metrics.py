"""Evaluation suite: weighted accuracy, one-vs-rest rates, ROC/AUC, k-fold CV."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted, in `labels` order."""

    labels: tuple
    counts: np.ndarray

    def total(self) -> int:
        return int(self.counts.sum())

    def row(self, label) -> np.ndarray:
        return self.counts[self.labels.index(label)]

    def add(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.labels != self.labels:
            raise MetricsError("cannot sum confusion matrices over different labels")
        return ConfusionMatrix(self.labels, self.counts + other.counts)


def confusion(y_true, y_pred, labels) -> ConfusionMatrix:
    labels = tuple(labels)
    pos = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred, strict=True):
        counts[pos[t], pos[p]] += 1
    return ConfusionMatrix(labels, counts)


def load_weights(path=None) -> dict[str, float]:
    """Read the class -> normalized weight table (tab separated)."""
    if path is None:
        text = resources.files("svctriage.data").joinpath(
            "department_weights.txt"
        ).read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    weights: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MetricsError(f"weights line {lineno}: expected class<TAB>weight")
        weights[parts[0]] = float(parts[1])
    total = sum(weights.values())
    if weights and abs(total - 1.0) > 1e-9:
        raise MetricsError(f"weights sum to {total}, expected 1")
    return weights


def weighted_accuracy(conf: ConfusionMatrix, weights=None, raw_counts: bool = False) -> float:
    """Class-weighted mean per-class recall.

    Weights are renormalized over the classes actually present (nonzero row
    count) so a perfect classifier scores exactly 1 on any subset.  `weights`
    of None means uniform, which reduces to balanced accuracy.  With
    `raw_counts` the literal unnormalized weighted correct-count sum is
    returned instead.
    """
    if conf.total() == 0:
        raise MetricsError("empty confusion matrix")
    row_totals = conf.counts.sum(axis=1)
    present = [i for i, n in enumerate(row_totals) if n > 0]
    if weights is None:
        w = {conf.labels[i]: 1.0 for i in present}
    else:
        w = weights
    missing = [conf.labels[i] for i in present if conf.labels[i] not in w]
    if missing:
        raise MetricsError("no weight for classes: " + ", ".join(str(m) for m in missing))
    if raw_counts:
        return float(
            sum(w[conf.labels[i]] * conf.counts[i, i] for i in present)
        )
    w_total = sum(w[conf.labels[i]] for i in present)
    if w_total <= 0:
        raise MetricsError("weights over present classes sum to zero")
    return float(
        sum(
            (w[conf.labels[i]] / w_total) * (conf.counts[i, i] / row_totals[i])
            for i in present
        )
    )


@dataclass(frozen=True)
class BasicMetrics:
    sensitivity: float
    specificity: float
    precision: float
    f_score: float
    degenerate: tuple = ()


def basic_metrics(conf: ConfusionMatrix, positive) -> BasicMetrics:
    """One-vs-rest collapse of the matrix around `positive`.

    0/0 ratios are reported as 0 and named in `degenerate`.
    """
    if positive not in conf.labels:
        raise MetricsError(f"class {positive!r} not in confusion matrix")
    i = conf.labels.index(positive)
    tp = float(conf.counts[i, i])
    fn = float(conf.counts[i].sum() - tp)
    fp = float(conf.counts[:, i].sum() - tp)
    tn = float(conf.total() - tp - fn - fp)
    degenerate = []

    def rate(num, den, name):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    sens = rate(tp, tp + fn, "sensitivity")
    spec = rate(tn, tn + fp, "specificity")
    prec = rate(tp, tp + fp, "precision")
    f = rate(2 * prec * sens, prec + sens, "f_score")
    return BasicMetrics(sens, spec, prec, f, tuple(degenerate))


@dataclass(frozen=True)
class RocCurve:
    points: tuple  # (fpr, tpr) pairs, fpr non-decreasing
    auc: float


def roc_auc(scores, labels) -> RocCurve:
    """Threshold-sweep ROC with grouped ties; AUC by the rank statistic.

    AUC equals the probability a positive outranks a negative, counting ties
    as half, which matches trapezoidal integration of the tie-grouped curve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape[0] != labels.shape[0]:
        raise MetricsError("scores and labels must align")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < s.size:
        j = i
        while j < s.size and s[j] == s[i]:
            j += 1
        tp += int(y[i:j].sum())
        fp += (j - i) - int(y[i:j].sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j

    # rank-based Mann-Whitney with average ranks over ties
    asc = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and scores[asc[j]] == scores[asc[i]]:
            j += 1
        ranks[asc[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    r_pos = ranks[labels].sum()
    auc = (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return RocCurve(points=tuple(points), auc=float(auc))


@dataclass
class FoldResult:
    fold: int
    confusion: ConfusionMatrix
    accuracy: float


@dataclass
class MetricsReport:
    classes: tuple
    folds: list[FoldResult]
    confusion: ConfusionMatrix
    accuracy: float
    mean_accuracy: float
    std_accuracy: float
    per_class: dict
    per_class_auc: dict
    roc_curves: dict
    positive_class: object = None
    warnings: list = field(default_factory=list)

    def headline(self) -> BasicMetrics:
        if self.positive_class is not None:
            return self.per_class[self.positive_class]
        vals = np.array(
            [
                (m.sensitivity, m.specificity, m.precision, m.f_score)
                for m in self.per_class.values()
            ]
        )
        means = vals.mean(axis=0) if vals.size else np.zeros(4)
        return BasicMetrics(*[float(v) for v in means])

    def to_text(self) -> str:
        h = self.headline()
        lines = [
            "Accuracy = %.4f" % self.accuracy,
            "Sensitivity = %.4f" % h.sensitivity,
            "Specificity = %.4f" % h.specificity,
            "Precision = %.4f" % h.precision,
            "F-score = %.4f" % h.f_score,
            "FoldAccuracyMean = %.4f" % self.mean_accuracy,
            "FoldAccuracyStd = %.4f" % self.std_accuracy,
            "",
            "# per-fold accuracy",
        ]
        for fr in self.folds:
            lines.append("fold %d = %.4f" % (fr.fold, fr.accuracy))
        lines.append("")
        lines.append("# per-class: Sensitivity Specificity Precision F-score AUC")
        for cls in self.classes:
            m = self.per_class[cls]
            auc = self.per_class_auc.get(cls)
            auc_text = "%.4f" % auc if auc is not None else "n/a"
            lines.append(
                "%s\t%.4f\t%.4f\t%.4f\t%.4f\t%s"
                % (cls, m.sensitivity, m.specificity, m.precision, m.f_score, auc_text)
            )
        lines.append("")
        lines.append("# confusion matrix (rows true, columns predicted)")
        lines.append("\t" + "\t".join(str(c) for c in self.classes))
        for i, cls in enumerate(self.classes):
            lines.append(
                str(cls) + "\t" + "\t".join(str(int(v)) for v in self.confusion.counts[i])
            )
        for w in self.warnings:
            lines.append("# warning: " + w)
        return "\n".join(lines) + "\n"


def cross_validate(
    fit,
    records,
    folds,
    *,
    label_fn,
    classes,
    weights=None,
    positive_class=None,
) -> MetricsReport:
    """K-fold evaluation with all fitting confined to the training folds.

    `fit(train_records)` must return a `predict(test_records)` callable
    producing (labels, scores) where scores is an array aligned to `classes`
    or None.  Vocabulary building, standardization, and any other data-
    dependent state must happen inside `fit`; the test fold is never passed.
    """
    classes = tuple(classes)
    records = list(records)
    by_fold: dict[int, list] = {i: [] for i in range(folds.k)}
    for rec in records:
        by_fold[folds.mapping[rec.id]].append(rec)

    fold_results: list[FoldResult] = []
    warnings: list[str] = []
    pooled_true: list = []
    pooled_scores: list = []
    total_conf = ConfusionMatrix(classes, np.zeros((len(classes), len(classes)), dtype=np.int64))
    for i in range(folds.k):
        test = by_fold[i]
        train = [rec for j in range(folds.k) if j != i for rec in by_fold[j]]
        if not test:
            warnings.append(f"fold {i} is empty")
            continue
        predict = fit(train)
        pred_labels, scores = predict(test)
        true_labels = [label_fn(rec) for rec in test]
        conf = confusion(true_labels, pred_labels, classes)
        if weights is not None:
            absent = [
                c for c in classes
                if c in weights and conf.row(c).sum() == 0
            ]
            if absent:
                warnings.append(
                    f"fold {i}: no test records for {', '.join(map(str, absent))};"
                    " excluded from that fold's weighting"
                )
        acc = weighted_accuracy(conf, weights)
        fold_results.append(FoldResult(fold=i, confusion=conf, accuracy=acc))
        total_conf = total_conf.add(conf)
        pooled_true.extend(true_labels)
        if scores is not None:
            pooled_scores.append(np.asarray(scores, dtype=np.float64))

    if not fold_results:
        raise MetricsError("no folds evaluated")
    accs = np.array([fr.accuracy for fr in fold_results])
    per_class = {cls: basic_metrics(total_conf, cls) for cls in classes}
    per_class_auc: dict = {}
    roc_curves: dict = {}
    if pooled_scores and len(pooled_true) == sum(len(s) for s in pooled_scores):
        score_matrix = np.vstack(pooled_scores)
        true_arr = np.array(pooled_true)
        for ci, cls in enumerate(classes):
            is_pos = true_arr == cls
            if 0 < is_pos.sum() < is_pos.size:
                curve = roc_auc(score_matrix[:, ci], is_pos)
                per_class_auc[cls] = curve.auc
                roc_curves[cls] = curve
            else:
                per_class_auc[cls] = None
    return MetricsReport(
        classes=classes,
        folds=fold_results,
        confusion=total_conf,
        accuracy=weighted_accuracy(total_conf, weights),
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),
        per_class=per_class,
        per_class_auc=per_class_auc,
        roc_curves=roc_curves,
        positive_class=positive_class,
        warnings=warnings,
    )


def write_roc_points(path, curve: RocCurve, comment: str | None = None) -> None:
    """Two numeric columns with a header, ready for plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("fpr\ttpr\n")
        for fpr, tpr in curve.points:
            fh.write("%.6f\t%.6f\n" % (fpr, tpr))
