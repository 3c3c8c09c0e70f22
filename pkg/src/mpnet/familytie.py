"""Predicting whether two profiles belong to the same account.

Pairwise features are computed from the friendship graph and the profile
metadata, scored one at a time by AUC and combined in an L2-regularised
logistic regression trained on a disjoint balanced sample.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .core_graph import MultiProfileNetwork, family_pair_array, family_pair_count
from .errors import ConvergenceError, DegenerateError, MpnetError

FEATURES = (
    "degree_difference", "friend", "common_friends", "jaccard",
    "same_race", "same_sex", "same_coloration", "same_location",
    "birth_date_diff", "same_join_date", "join_date_diff", "join_age_diff",
    "weight_diff", "same_weight",
)
STRUCTURAL = FEATURES[:4]
LABELS = {
    "degree_difference": "Degree difference", "friend": "Friend",
    "common_friends": "Common friends", "jaccard": "Jaccard index",
    "same_race": "Same race", "same_sex": "Same sex", "same_coloration": "Same coloration",
    "same_location": "Same location", "birth_date_diff": "Birth date difference",
    "same_join_date": "Same join date", "join_date_diff": "Join date difference",
    "join_age_diff": "Join age difference", "weight_diff": "Weight difference",
    "same_weight": "Same weight",
}


@dataclass(frozen=True)
class PairFeatures:
    """Features of one unordered pair; ``None`` marks a missing value."""

    degree_difference: float
    friend: int
    common_friends: int
    jaccard: float
    same_race: Optional[int] = None
    same_sex: Optional[int] = None
    same_coloration: Optional[int] = None
    same_location: Optional[int] = None
    birth_date_diff: Optional[float] = None
    same_join_date: Optional[int] = None
    join_date_diff: Optional[float] = None
    join_age_diff: Optional[float] = None
    weight_diff: Optional[float] = None
    same_weight: Optional[int] = None

    def as_tuple(self):
        return tuple(getattr(self, f) for f in FEATURES)


def _same_categorical(col, u, v):
    a, b = col[u], col[v]
    out = np.full(len(u), np.nan)
    ok = np.array([x is not None and y is not None for x, y in zip(a, b)], dtype=bool)
    out[ok] = [float(x == y) for x, y in zip(a[ok], b[ok])]
    return out


def feature_matrix(net: MultiProfileNetwork, pairs: np.ndarray) -> np.ndarray:
    """Features of many pairs at once, one column per entry of ``FEATURES``.

    Missing metadata features are NaN.  Structural features are always
    present.  Same-location compares coordinates exactly; same-weight
    compares weight-range tokens and weight difference uses exact weights.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    u, v = pairs[:, 0], pairs[:, 1]
    if np.any(u == v):
        raise MpnetError("a profile cannot be paired with itself")
    A = net.graph.adjacency()
    deg = net.degrees.astype(float)
    t = net.meta
    out = np.full((len(pairs), len(FEATURES)), np.nan)
    col = {f: i for i, f in enumerate(FEATURES)}

    out[:, col["degree_difference"]] = np.abs(np.log1p(deg[u]) - np.log1p(deg[v]))
    Au, Av = A[u], A[v]
    friend = np.asarray(A[u, v]).ravel()
    common = np.asarray(Au.multiply(Av).sum(axis=1)).ravel()
    union = deg[u] + deg[v] - common
    out[:, col["friend"]] = friend
    out[:, col["common_friends"]] = common
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:, col["jaccard"]] = np.where(union > 0, common / union, 0.0)

    out[:, col["same_race"]] = _same_categorical(t.race, u, v)
    out[:, col["same_sex"]] = _same_categorical(t.sex, u, v)
    out[:, col["same_coloration"]] = _same_categorical(t.coloration, u, v)
    out[:, col["same_weight"]] = _same_categorical(t.weight_range, u, v)
    loc = t.has_location()
    same_loc = ((t.lat[u] == t.lat[v]) & (t.lon[u] == t.lon[v])).astype(float)
    out[:, col["same_location"]] = np.where(loc[u] & loc[v], same_loc, np.nan)

    out[:, col["birth_date_diff"]] = -np.abs(t.birth_date[u] - t.birth_date[v])
    jd = t.join_date.astype(float)
    out[:, col["same_join_date"]] = (jd[u] == jd[v]).astype(float)
    out[:, col["join_date_diff"]] = -np.abs(jd[u] - jd[v])
    age = jd - t.birth_date
    age = np.where(age >= 0, age, np.nan)
    out[:, col["join_age_diff"]] = -np.abs(age[u] - age[v])
    out[:, col["weight_diff"]] = -np.abs(t.weight[u] - t.weight[v])
    return out


def extract_features(net: MultiProfileNetwork, u: int, v: int) -> PairFeatures:
    if u == v:
        raise MpnetError("a profile cannot be paired with itself")
    row = feature_matrix(net, np.array([[u, v]]))[0]
    vals = {}
    for f, x in zip(FEATURES, row):
        if np.isnan(x):
            vals[f] = None
        elif f in ("friend", "common_friends") or f.startswith("same_"):
            vals[f] = int(x)
        else:
            vals[f] = float(x)
    return PairFeatures(**vals)


# -- sampling -----------------------------------------------------------------

@dataclass
class LabeledPairSet:
    pairs: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    seed: int
    tag: str = "test"

    @property
    def e(self) -> int:
        return int(self.labels.sum())

    def keys(self) -> set:
        return {(int(a), int(b)) for a, b in self.pairs}


def sample_pairs(net: MultiProfileNetwork, e: int, seed: int,
                 exclude: Optional[LabeledPairSet] = None, tag: str = "test") -> LabeledPairSet:
    """Draw ``e`` same-household pairs and ``e`` cross-household pairs.

    Positives are uniform over family pairs not in ``exclude``; negatives
    are drawn by rejection sampling of uniform profile pairs.  Pairs are
    stored with ``u < v``; positives come first.
    """
    if e < 1:
        raise MpnetError("e must be positive")
    fam = family_pair_array(net)
    if len(fam) == 0:
        raise DegenerateError("no family pairs")
    excluded = exclude.keys() if exclude is not None else set()
    if excluded:
        mask = np.array([(int(a), int(b)) not in excluded for a, b in fam], dtype=bool)
        fam = fam[mask]
    if len(fam) < e:
        raise DegenerateError(f"insufficient family pairs: need {e}, have {len(fam)}")
    n = net.n_profiles
    total = n * (n - 1) // 2
    if total - family_pair_count(net) - len(excluded) < e:
        raise DegenerateError("insufficient non-family pairs")
    rng = np.random.default_rng(seed)
    pos = fam[np.sort(rng.choice(len(fam), size=e, replace=False))]
    acct = net.account_of
    neg = []
    seen = set()
    while len(neg) < e:
        batch = rng.integers(0, n, size=(2 * (e - len(neg)) + 16, 2))
        for a, b in batch:
            if a == b or acct[a] == acct[b]:
                continue
            key = (int(min(a, b)), int(max(a, b)))
            if key in seen or key in excluded:
                continue
            seen.add(key)
            neg.append(key)
            if len(neg) == e:
                break
    pairs = np.concatenate([pos, np.array(neg, dtype=np.int64)])
    labels = np.concatenate([np.ones(e, dtype=np.int64), np.zeros(e, dtype=np.int64)])
    return LabeledPairSet(pairs, labels, feature_matrix(net, pairs), seed, tag)


# -- AUC ----------------------------------------------------------------------

def mann_whitney_2u(scores, labels) -> tuple[int, int]:
    """Twice the Mann-Whitney U of the positives, and ``2 * n_pos * n_neg``.

    Both are exact integers (mid-ranks of ties are half-integers), so
    complementary orderings satisfy ``U(f) + U(-f) = n_pos * n_neg`` exactly.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("AUC needs both classes")
    twice_ranks = np.rint(2 * rankdata(s)).astype(np.int64)
    return int(twice_ranks[y].sum()) - n_pos * (n_pos + 1), 2 * n_pos * n_neg


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum; ties count 1/2."""
    u2, total = mann_whitney_2u(scores, labels)
    return u2 / total


# -- logistic regression ------------------------------------------------------

@dataclass
class LogisticModel:
    intercept: float
    weights: np.ndarray
    roster: list
    impute_means: dict = field(default_factory=dict)
    missing_policy: str = "impute"
    l2: float = 1e-4
    iterations: int = 0
    final_loss: float = float("nan")

    def design(self, X: np.ndarray, features=FEATURES) -> np.ndarray:
        """Map raw feature columns onto the model's roster."""
        idx = {f: i for i, f in enumerate(features)}
        cols = []
        for name in self.roster:
            if name.endswith(":missing"):
                cols.append(np.isnan(X[:, idx[name[:-8]]]).astype(float))
            else:
                c = X[:, idx[name]]
                cols.append(np.where(np.isnan(c), self.impute_means.get(name, 0.0), c))
        return np.column_stack(cols) if cols else np.zeros((len(X), 0))

    def decision_function(self, X: np.ndarray, features=FEATURES) -> np.ndarray:
        return self.intercept + self.design(X, features) @ self.weights

    def predict_proba(self, X: np.ndarray, features=FEATURES) -> np.ndarray:
        return _sigmoid(self.decision_function(X, features))

    def to_json(self) -> str:
        return json.dumps({
            "roster": list(self.roster), "intercept": self.intercept,
            "weights": [float(w) for w in self.weights],
            "impute_means": self.impute_means, "missing_policy": self.missing_policy,
            "l2": self.l2, "iterations": self.iterations, "final_loss": self.final_loss,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        d = json.loads(text)
        return cls(d["intercept"], np.array(d["weights"], dtype=float), d["roster"],
                   d["impute_means"], d["missing_policy"], d["l2"], d["iterations"],
                   d["final_loss"])


def _sigmoid(z):
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


def logistic_objective(theta, X, y, l2):
    """Mean negative log-likelihood plus ``l2/2 * ||b||^2`` (intercept unpenalised)."""
    z = theta[0] + X @ theta[1:]
    loss = np.mean(np.logaddexp(0, z) - y * z) + 0.5 * l2 * np.dot(theta[1:], theta[1:])
    return float(loss)


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float = 1e-4, tol: float = 1e-8,
                 max_iter: int = 100) -> tuple[np.ndarray, int, float]:
    """Newton's method from zero for the L2-regularised logistic loss.

    Returns ``(theta, iterations, loss)`` with ``theta = [a, b_1, ...]``.
    Steps are halved until the objective decreases, so the iteration is
    monotone even far from the optimum.
    """
    n, p = X.shape
    Z = np.column_stack([np.ones(n), X])
    theta = np.zeros(p + 1)
    pen = np.full(p + 1, l2)
    pen[0] = 0.0
    loss = logistic_objective(theta, X, y, l2)
    for it in range(1, max_iter + 1):
        mu = _sigmoid(Z @ theta)
        grad = Z.T @ (mu - y) / n + pen * theta
        if np.linalg.norm(grad) <= tol:
            return theta, it - 1, loss
        W = mu * (1 - mu)
        H = (Z * W[:, None]).T @ Z / n + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = theta - t * step
            new = logistic_objective(cand, X, y, l2)
            if new <= loss or t < 1e-10:
                break
            t /= 2
        theta, loss = cand, new
    mu = _sigmoid(Z @ theta)
    grad = Z.T @ (mu - y) / n + pen * theta
    if np.linalg.norm(grad) <= tol:
        return theta, max_iter, loss
    raise ConvergenceError(f"logistic regression did not converge in {max_iter} iterations "
                           f"(gradient norm {np.linalg.norm(grad):.3g})")


def train_logistic(train: LabeledPairSet, missing_policy: str = "impute", l2: float = 1e-4,
                   tol: float = 1e-8, max_iter: int = 100, features=FEATURES,
                   columns: Optional[list] = None) -> LogisticModel:
    """Fit the combined predictor on a labelled pair set.

    ``missing_policy="impute"`` replaces missing values by the training mean
    and adds a ``<feature>:missing`` indicator for every feature that has
    missing values; ``"drop"`` discards training pairs with any missing
    feature.  Features never observed in the training set are left out.
    """
    y = train.labels.astype(float)
    if y.min() == y.max():
        raise DegenerateError("training set has a single class")
    X = train.features
    idx = {f: i for i, f in enumerate(features)}
    use = [f for f in (columns or features) if not np.all(np.isnan(X[:, idx[f]]))]
    roster, means = [], {}
    if missing_policy == "impute":
        for f in use:
            c = X[:, idx[f]]
            means[f] = float(np.nanmean(c))
            roster.append(f)
        roster += [f + ":missing" for f in use if np.isnan(X[:, idx[f]]).any()]
        rows = np.ones(len(X), dtype=bool)
    elif missing_policy == "drop":
        roster = list(use)
        rows = ~np.isnan(X[:, [idx[f] for f in use]]).any(axis=1)
        if y[rows].min() == y[rows].max():
            raise DegenerateError("no complete pairs of both classes")
    else:
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    model = LogisticModel(0.0, np.zeros(len(roster)), roster, means, missing_policy, l2)
    D = model.design(X[rows], features)
    theta, iters, loss = fit_logistic(D, y[rows], l2=l2, tol=tol, max_iter=max_iter)
    model.intercept = float(theta[0])
    model.weights = theta[1:]
    model.iterations = iters
    model.final_loss = loss
    return model


# -- report -------------------------------------------------------------------

@dataclass
class FeatureRow:
    feature: str
    auc: Optional[float]
    coverage: float
    weight: Optional[float]
    absent: Optional[str] = None


@dataclass
class PredictionReport:
    rows: list
    regression_auc: float
    intercept: float
    e: int
    seed: int
    settings: dict
    model: Optional[LogisticModel] = None

    def to_dict(self) -> dict:
        return {"features": [asdict(r) for r in self.rows],
                "regression_auc": self.regression_auc, "intercept": self.intercept,
                "e": self.e, "seed": self.seed, "settings": self.settings,
                "model": json.loads(self.model.to_json()) if self.model else None}

    def to_tsv(self) -> str:
        lines = ["feature\tauc\tweight\tcoverage"]
        for r in self.rows:
            a = "---" if r.auc is None else f"{100 * r.auc:.1f}%"
            w = "---" if r.weight is None else f"{r.weight:.2f}"
            lines.append(f"{LABELS[r.feature]}\t{a}\t{w}\t{r.coverage:.3f}")
        lines.append(f"Regression\t{100 * self.regression_auc:.1f}%\t\t")
        return "\n".join(lines) + "\n"


def default_e(net: MultiProfileNetwork, cap: int = 10_000) -> int:
    """Half the family pairs (so train and test fit disjointly), capped at ``cap``."""
    return max(1, min(family_pair_count(net) // 2, cap))


def prediction_report(net: MultiProfileNetwork, e: Optional[int] = None, seed: int = 0,
                      missing_policy: str = "impute", l2: float = 1e-4,
                      tol: float = 1e-8, max_iter: int = 100) -> PredictionReport:
    """Single-feature AUCs and the regression AUC on a held-out balanced test set.

    The test set is drawn first; the training set is drawn disjoint from it
    with a seed derived from ``seed``.  Each feature's AUC uses only test
    pairs where it is defined.  Features that are constant on the test set
    for structural reasons (e.g. friendship on a site forbidding
    intra-household links) are reported but marked.
    """
    e_rule = "given"
    if e is None:
        e = default_e(net)
        e_rule = "min(family pairs // 2, 10000)"
    test_seed, train_seed = (int(s.generate_state(1, np.uint64)[0])
                             for s in np.random.SeedSequence(seed).spawn(2))
    test = sample_pairs(net, e, test_seed, tag="test")
    train = sample_pairs(net, e, train_seed, exclude=test, tag="train")
    model = train_logistic(train, missing_policy, l2, tol, max_iter)
    weights = dict(zip(model.roster, model.weights))
    rows = []
    for i, f in enumerate(FEATURES):
        c = test.features[:, i]
        ok = ~np.isnan(c)
        cov = float(ok.mean())
        w = weights.get(f)
        w = None if w is None else float(w)
        if not ok.any():
            rows.append(FeatureRow(f, None, 0.0, w, "not available"))
            continue
        if f == "friend" and not net.allows_intra_household_edges:
            rows.append(FeatureRow(f, None, cov, w, "intra-household friendships not allowed"))
            continue
        y = test.labels[ok]
        if y.min() == y.max():
            rows.append(FeatureRow(f, None, cov, w, "single class where defined"))
            continue
        rows.append(FeatureRow(f, auc(c[ok], y), cov, w))
    reg = auc(model.decision_function(test.features), test.labels)
    settings = {"missing_policy": missing_policy, "l2": l2, "negative_sampling": "uniform",
                "e_rule": e_rule,
                "test_seed": test_seed, "train_seed": train_seed}
    return PredictionReport(rows, reg, model.intercept, e, seed, settings, model)
