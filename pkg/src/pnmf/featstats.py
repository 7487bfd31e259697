"""Per-component class-discrimination statistics and feature selection.

Each factorization component is scored on the training split with three
complementary criteria: ROC AUC (Mann-Whitney form), Cohen's d, and a
two-sided Welch t-test.  Components are ranked AUC-first and the top M
indices are fixed once and applied verbatim to every other split.
"""

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import betainc

from pnmf.errors import BadConfig, DegenerateVariance, EmptyClass


@dataclass(frozen=True)
class FeatureScore:
    """Discrimination statistics of one component (tumor = positive class)."""

    component_index: int
    auc: float
    cohens_d: float
    welch_t: float
    welch_df: float
    p_value: float


@dataclass
class SelectionResult:
    ranked: list
    selected: list
    M: int
    ranking_key: str = "|auc-0.5| desc, then |d| desc, then p asc; p > p_max demoted"


def auc(scores_positive, scores_negative) -> float:
    """Mann-Whitney AUC: P(positive > negative) with ties counted half.

    Computed from midranks, which is exactly equivalent to the pairwise
    count (#{p > n} + 0.5 * #{p = n}) / (|P| * |N|).
    """
    pos = np.asarray(scores_positive, dtype=np.float64).ravel()
    neg = np.asarray(scores_negative, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise EmptyClass("both classes need at least one sample")
    combined = np.concatenate([pos, neg])
    _, inverse, counts = np.unique(combined, return_inverse=True, return_counts=True)
    group_start = np.concatenate(([0], np.cumsum(counts)[:-1]))
    midranks = group_start + (counts + 1) / 2.0
    rank_sum_pos = midranks[inverse[: pos.size]].sum()
    u = rank_sum_pos - pos.size * (pos.size + 1) / 2.0
    return u / (pos.size * neg.size)


def cohens_d(group_tumor, group_normal) -> float:
    """Standardized mean difference (tumor minus normal, pooled SD)."""
    a = np.asarray(group_tumor, dtype=np.float64)
    b = np.asarray(group_normal, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise EmptyClass("each group needs at least two samples")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    pooled = ((a.size - 1) * va + (b.size - 1) * vb) / (a.size + b.size - 2)
    if pooled <= 0.0:
        raise DegenerateVariance("pooled variance is zero")
    return float((a.mean() - b.mean()) / np.sqrt(pooled))


def welch_test(a, b):
    """Welch's two-sample t-test.

    Returns (t, df, p) with Welch-Satterthwaite degrees of freedom and a
    two-sided p-value from the Student-t CDF, evaluated through the
    regularized incomplete beta function.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise EmptyClass("each sample needs at least two observations")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb <= 0.0:
        raise DegenerateVariance("both sample variances are zero")
    t = float((a.mean() - b.mean()) / np.sqrt(va + vb))
    df = float(
        (va + vb) ** 2
        / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    )
    if t == 0.0:
        p = 1.0
    else:
        p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, df, min(max(p, 5e-324), 1.0)


def score_components(X, labels) -> list:
    """FeatureScore for every row of X (components x samples)."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    tumor = X[:, labels == 1]
    normal = X[:, labels == 0]
    if tumor.shape[1] == 0 or normal.shape[1] == 0:
        raise EmptyClass("need both classes present to score components")
    scores = []
    for r in range(X.shape[0]):
        t, df, p = welch_test(tumor[r], normal[r])
        scores.append(
            FeatureScore(
                component_index=r,
                auc=auc(tumor[r], normal[r]),
                cohens_d=cohens_d(tumor[r], normal[r]),
                welch_t=t,
                welch_df=df,
                p_value=p,
            )
        )
    return scores


def rank_and_select(train_features, M: int, p_max: float = 0.05) -> SelectionResult:
    """Rank components on the training split and pick the top M.

    ``train_features`` is a FeatureSet (or anything with ``X`` and
    ``labels``).  Ranking key: |auc - 0.5| descending, tie-broken by
    |d| descending, then by smaller p; components failing the
    significance gate (p > p_max) are demoted below every passing one.
    Selection must be applied unchanged to validation and test features
    downstream.
    """
    X_train = np.asarray(train_features.X, dtype=np.float64)
    R = X_train.shape[0]
    if not 1 <= M <= R:
        raise BadConfig(f"M must be in [1, {R}], got {M}")
    scores = score_components(X_train, train_features.labels)

    def key(s: FeatureScore):
        demoted = 1 if s.p_value > p_max else 0
        return (demoted, -abs(s.auc - 0.5), -abs(s.cohens_d), s.p_value, s.component_index)

    ranked = sorted(scores, key=key)
    selected = [s.component_index for s in ranked[:M]]
    return SelectionResult(ranked=ranked, selected=selected, M=M)


def write_ranking_csv(result: SelectionResult, path):
    """Ranking table: one row per component in rank order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "auc", "d", "t", "df", "p", "rank", "selected"])
        for rank, s in enumerate(result.ranked):
            writer.writerow(
                [
                    s.component_index,
                    f"{s.auc:.10g}",
                    f"{s.cohens_d:.10g}",
                    f"{s.welch_t:.10g}",
                    f"{s.welch_df:.10g}",
                    f"{s.p_value:.10g}",
                    rank,
                    int(s.component_index in result.selected),
                ]
            )


def write_selection_json(result: SelectionResult, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "selected": result.selected,
        "M": result.M,
        "ranking_key": result.ranking_key,
        "ranked": [asdict(s) for s in result.ranked],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_selection_json(path) -> SelectionResult:
    with open(path) as fh:
        payload = json.load(fh)
    ranked = [FeatureScore(**s) for s in payload["ranked"]]
    return SelectionResult(
        ranked=ranked,
        selected=list(payload["selected"]),
        M=payload["M"],
        ranking_key=payload["ranking_key"],
    )
