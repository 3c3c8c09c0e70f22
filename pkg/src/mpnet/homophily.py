"""Friendship-level and household-level homophily.

Every coefficient is computed over a population of unordered profile pairs:
the friendship edges (level ``"friendship"``, subscript p) or the
same-household pairs (level ``"household"``, subscript a).  Pairs with a
missing value at either endpoint are excluded per attribute.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core_graph import MultiProfileNetwork, family_pair_array
from .errors import DegenerateError, MpnetError

EARTH_RADIUS_KM = 6371.0
LEVELS = ("friendship", "household")


@dataclass
class PairPopulation:
    level: str
    pairs: np.ndarray

    @classmethod
    def of(cls, net: MultiProfileNetwork, level: str) -> "PairPopulation":
        if level == "friendship":
            return cls(level, net.graph.edge_array())
        if level == "household":
            return cls(level, family_pair_array(net))
        raise ValueError(f"unknown level {level!r}")


@dataclass
class AssortativityResult:
    attribute: str
    level: str
    r: float
    uncertainty: Optional[float]
    n_pairs: int
    method: str
    coverage: Optional[float] = None

    @property
    def marker(self) -> str:
        """Significance marker: ++/+ for a small error, **/* for a small p-value."""
        u = self.uncertainty
        if u is None:
            return ""
        if self.method == "categorical":
            return "++" if u < 0.001 else "+" if u < 0.01 else ""
        return "**" if u < 0.001 else "*" if u < 0.01 else ""


# -- categorical --------------------------------------------------------------

def _encode(a: np.ndarray, b: np.ndarray):
    tokens = sorted(set(a) | set(b))
    code = {t: i for i, t in enumerate(tokens)}
    return (np.fromiter((code[t] for t in a), np.int64, len(a)),
            np.fromiter((code[t] for t in b), np.int64, len(b)), len(tokens))


def _categorical_r(counts: np.ndarray) -> float:
    """Assortativity of a symmetric mixing-count matrix."""
    p = counts / counts.sum()
    marg = p.sum(axis=1)
    s = float(np.dot(marg, marg))
    if s >= 1.0 - 1e-15:
        raise DegenerateError("attribute is constant over the pair population")
    return (float(np.trace(p)) - s) / (1.0 - s)


def mixing_counts(ci: np.ndarray, cj: np.ndarray, k: int) -> np.ndarray:
    """Symmetric mixing matrix; each unordered pair adds 1/2 to (i,j) and (j,i)."""
    m = np.zeros((k, k))
    np.add.at(m, (ci, cj), 0.5)
    np.add.at(m, (cj, ci), 0.5)
    return m


def _jackknife_se(ci, cj, k, r):
    """Jackknife error ``sqrt(sum_i (r_i - r)^2)`` over single-pair deletions.

    Deleting a pair only depends on its (unordered) category combination, so
    each distinct combination is evaluated once and weighted by its count.
    """
    m = len(ci)
    n_ab = mixing_counts(ci, cj, k) * 2.0
    trace = np.trace(n_ab)
    marg = n_ab.sum(axis=1)
    a = np.minimum(ci, cj)
    b = np.maximum(ci, cj)
    combos, mult = np.unique(a * k + b, return_counts=True)
    ca, cb = combos // k, combos % k
    total = 2.0 * (m - 1)
    tr = trace - 2.0 * (ca == cb)
    marg_sq = np.dot(marg, marg)
    # marginals drop by one at both endpoints (two at a diagonal cell)
    new_sq = np.where(ca == cb, marg_sq - 4 * marg[ca] + 4,
                      marg_sq - 2 * marg[ca] + 1 - 2 * marg[cb] + 1)
    s = new_sq / total ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        r_i = (tr / total - s) / (1.0 - s)
    ok = np.isfinite(r_i)
    return float(math.sqrt(np.sum(mult[ok] * (r_i[ok] - r) ** 2)))


def categorical_assortativity(net: MultiProfileNetwork, pop: PairPopulation,
                              attr: str) -> AssortativityResult:
    """Categorical assortativity ``(sum_i P(i,i) - sum_i P(i)^2) / (1 - sum_i P(i)^2)``.

    The uncertainty is the jackknife standard error over pair deletions.
    """
    col = net.meta.column(attr)
    if col.dtype != object:
        raise MpnetError(f"{attr!r} is not a categorical attribute")
    u, v = pop.pairs[:, 0], pop.pairs[:, 1]
    keep = np.array([(x is not None) and (y is not None) for x, y in zip(col[u], col[v])],
                    dtype=bool)
    if keep.sum() < 2:
        raise DegenerateError(f"fewer than two pairs with {attr!r} present")
    ci, cj, k = _encode(col[u[keep]], col[v[keep]])
    if k < 2:
        raise DegenerateError("attribute is constant over the pair population")
    r = _categorical_r(mixing_counts(ci, cj, k))
    se = _jackknife_se(ci, cj, k, r)
    return AssortativityResult(attr, pop.level, r, se, int(keep.sum()), "categorical",
                               float(keep.mean()) if len(keep) else None)


# -- numeric ------------------------------------------------------------------

def _numeric_r(x: np.ndarray, y: np.ndarray) -> float:
    """``cov(X, Y) / var(X)`` over the symmetrised pair list."""
    X = np.concatenate([x, y])
    Y = np.concatenate([y, x])
    mu = X.mean()
    var = np.mean((X - mu) ** 2)
    if not var > 0:
        raise DegenerateError("zero variance")
    return float(np.mean((X - mu) * (Y - mu)) / var)


def _derived_streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def permutation_pvalue(stat_fn, values: np.ndarray, observed: float, n_perm: int, seed,
                       threads: int = 1) -> float:
    """Two-sided permutation p-value ``(1 + #{|T*| >= |T|}) / (1 + n_perm)``.

    Each permutation uses its own stream spawned from ``seed``, so the result
    does not depend on ``threads``.
    """
    streams = _derived_streams(seed, n_perm)

    def one(rng):
        return stat_fn(rng.permutation(values))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            stats = list(pool.map(one, streams))
    else:
        stats = [one(g) for g in streams]
    hits = sum(abs(s) >= abs(observed) - 1e-12 for s in stats)
    return (1 + hits) / (1 + n_perm)


def numeric_values(net: MultiProfileNetwork, attr: str) -> np.ndarray:
    """Per-profile numeric values, including the derived ``degree`` and ``join_age``."""
    t = net.meta
    if attr == "degree":
        return net.degrees.astype(float)
    if attr == "join_age":
        age = t.join_date - t.birth_date
        return np.where(age >= 0, age, np.nan)
    col = t.column(attr)
    if col.dtype == object:
        raise MpnetError(f"{attr!r} is not a numeric attribute")
    return col.astype(float)


def numeric_assortativity(net: MultiProfileNetwork, pop: PairPopulation, attr: str,
                          n_perm: int = 1000, seed=0, threads: int = 1) -> AssortativityResult:
    """Numeric assortativity ``cov(X, Y) / var(X)`` with a permutation p-value.

    The null distribution permutes the endpoint values within the pair list.
    """
    vals = numeric_values(net, attr)
    x, y = vals[pop.pairs[:, 0]], vals[pop.pairs[:, 1]]
    keep = ~np.isnan(x) & ~np.isnan(y)
    if keep.sum() < 2:
        raise DegenerateError(f"fewer than two pairs with {attr!r} present")
    x, y = x[keep], y[keep]
    r = _numeric_r(x, y)
    p = None
    if n_perm:
        m = len(x)
        both = np.concatenate([x, y])
        p = permutation_pvalue(lambda z: _numeric_r(z[:m], z[m:]), both, r, n_perm, seed, threads)
    return AssortativityResult(attr, pop.level, r, p, int(keep.sum()), "pearson",
                               float(keep.mean()))


# -- distance correlation -----------------------------------------------------

def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in km on a sphere of radius 6,371.0 km."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dl = np.radians(lon2 - lon1)
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _unit_vectors(pts):
    lat, lon = np.radians(pts[:, 0]), np.radians(pts[:, 1])
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def _distance_block(xyz, rows):
    """Great-circle distances from ``xyz[rows]`` to every point (chord form)."""
    diff = xyz[rows][:, None, :] - xyz[None, :, :]
    chord = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(chord / 2, 1.0))


def distance_correlation(a: np.ndarray, b: np.ndarray, block: int = 256) -> float:
    """Distance correlation of two paired samples of (lat, lon) points.

    Uses great-circle distance on each side.  Repeated ``(a_i, b_i)``
    combinations are merged with multiplicity weights, and at most ``block``
    rows of a distance matrix are held in memory.  The double-centred cross
    moment is expanded as ``mean(a_ij b_ij) - 2 mean_i(abar_i bbar_i) + abar bbar``.
    """
    n = len(a)
    combos, w = np.unique(np.column_stack([a, b]), axis=0, return_counts=True)
    w = w.astype(float)
    xa, xb = _unit_vectors(combos[:, :2]), _unit_vectors(combos[:, 2:])
    m = len(combos)
    row_a, row_b = np.zeros(m), np.zeros(m)
    cross = aa = bb = 0.0
    for s in range(0, m, block):
        rows = np.arange(s, min(m, s + block))
        da = _distance_block(xa, rows)
        db = _distance_block(xb, rows)
        row_a[rows] = da @ w / n
        row_b[rows] = db @ w / n
        wr = w[rows]
        cross += float(wr @ (da * db) @ w)
        aa += float(wr @ (da * da) @ w)
        bb += float(wr @ (db * db) @ w)
    ma, mb = float(w @ row_a) / n, float(w @ row_b) / n
    n2 = float(n) * n
    dcov_ab = cross / n2 - 2 * float(w @ (row_a * row_b)) / n + ma * mb
    dvar_a = aa / n2 - 2 * float(w @ row_a ** 2) / n + ma ** 2
    dvar_b = bb / n2 - 2 * float(w @ row_b ** 2) / n + mb ** 2
    if dvar_a <= 1e-12 * max(aa / n2, 1.0) or dvar_b <= 1e-12 * max(bb / n2, 1.0):
        raise DegenerateError("degenerate metric: all locations identical")
    return float(math.sqrt(max(dcov_ab, 0.0) / math.sqrt(dvar_a * dvar_b)))


def _dcor_dense(A, B):
    """Distance correlation from precomputed double-centred matrices."""
    v = np.mean(A * B)
    return math.sqrt(max(v, 0.0) / math.sqrt(np.mean(A * A) * np.mean(B * B)))


def _centre(d):
    return d - d.mean(axis=0)[None, :] - d.mean(axis=1)[:, None] + d.mean()


def distance_assortativity(net: MultiProfileNetwork, pop: PairPopulation,
                           sample_size: int = 10_000, seed=0, n_perm: int = 199,
                           perm_sample: int = 1000, threads: int = 1) -> AssortativityResult:
    """Distance correlation between the locations at the two ends of each pair.

    Both orientations of every sampled pair are used, so ``sample_size``
    points come from ``sample_size // 2`` pairs drawn without replacement.
    The permutation p-value is computed on a ``perm_sample``-point
    sub-sample, permuting one side against the other.
    """
    t = net.meta
    has = t.has_location()
    u, v = pop.pairs[:, 0], pop.pairs[:, 1]
    keep = np.flatnonzero(has[u] & has[v])
    if len(keep) < 10:
        raise DegenerateError("fewer than ten pairs with both locations known")
    rng = np.random.default_rng(seed)
    take = min(len(keep), max(sample_size // 2, 5))
    chosen = np.sort(rng.choice(keep, size=take, replace=False))
    pu, pv = u[chosen], v[chosen]
    loc = np.column_stack([t.lat, t.lon])
    a = np.concatenate([loc[pu], loc[pv]])
    b = np.concatenate([loc[pv], loc[pu]])
    r = distance_correlation(a, b)
    p = None
    if n_perm:
        m = min(len(a), perm_sample)
        sub = np.sort(rng.choice(len(a), size=m, replace=False))
        A = _centre(_distance_block(_unit_vectors(a[sub]), np.arange(m)))
        Bd = _distance_block(_unit_vectors(b[sub]), np.arange(m))
        observed = _dcor_dense(A, _centre(Bd))
        streams = _derived_streams(seed, n_perm)

        def one(g):
            perm = g.permutation(m)
            return _dcor_dense(A, _centre(Bd[np.ix_(perm, perm)]))

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                stats = list(pool.map(one, streams))
        else:
            stats = [one(g) for g in streams]
        p = (1 + sum(s >= observed - 1e-12 for s in stats)) / (1 + n_perm)
    return AssortativityResult("location", pop.level, r, p, int(take), "dcor",
                               float(len(keep) / len(u)))


def assortativity_ratio(r_a: Optional[float], r_p: Optional[float]) -> Optional[float]:
    """``|r_a / r_p|``, or ``None`` when undefined."""
    if r_a is None or r_p is None or not (math.isfinite(r_a) and math.isfinite(r_p)) or r_p == 0:
        return None
    return abs(r_a / r_p)


# -- report -------------------------------------------------------------------

ATTRIBUTES = (
    ("race", "categorical"),
    ("sex", "categorical"),
    ("coloration", "categorical"),
    ("weight_range", "categorical"),
    ("degree", "numeric"),
    ("birth_date", "numeric"),
    ("join_date", "numeric"),
    ("join_age", "numeric"),
    ("weight", "numeric"),
    ("location", "distance"),
)
LABELS = {
    "race": "Race", "sex": "Sex", "coloration": "Coloration", "weight_range": "Weight range",
    "degree": "#Friends", "birth_date": "Birth date", "join_date": "Join date",
    "join_age": "Join age", "weight": "Weight", "location": "Location",
}


@dataclass
class HomophilyRow:
    attribute: str
    kind: str
    r_p: Optional[AssortativityResult] = None
    r_a: Optional[AssortativityResult] = None
    r_rel: Optional[float] = None
    absent: dict = field(default_factory=dict)


@dataclass
class HomophilyReport:
    rows: list
    negative_join_ages: int = 0
    settings: dict = field(default_factory=dict)

    def row(self, attribute: str) -> Optional[HomophilyRow]:
        for r in self.rows:
            if r.attribute == attribute:
                return r
        return None

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows],
                "negative_join_ages": self.negative_join_ages,
                "settings": self.settings}

    def to_tsv(self) -> str:
        def cell(res):
            return "---" if res is None else f"{res.r:.4f}{res.marker}"

        lines = ["attribute\tr_p\tr_a\tr_rel"]
        for row in self.rows:
            rel = "---" if row.r_rel is None else f"{row.r_rel:.3f}"
            lines.append(f"{LABELS.get(row.attribute, row.attribute)}\t{cell(row.r_p)}\t"
                         f"{cell(row.r_a)}\t{rel}")
        return "\n".join(lines) + "\n"


def _attribute_present(net, attr):
    if attr == "degree":
        return True
    if attr == "location":
        return bool(net.meta.has_location().any())
    vals = numeric_values(net, attr) if attr in ("join_age",) else net.meta.column(attr)
    if vals.dtype == object:
        return any(v is not None for v in vals)
    return bool((~np.isnan(vals.astype(float))).any())


def homophily_report(net: MultiProfileNetwork, seed=0, n_perm: int = 1000,
                     dcor_sample: int = 10_000, dcor_perm: int = 199,
                     threads: int = 1, attributes=None) -> HomophilyReport:
    """Assortativity at both levels for every attribute present in ``net``.

    Per-attribute failures (too few pairs, constant attribute) leave the
    corresponding cell empty with the reason recorded in ``absent``.
    Household-level location homophily is never computed since household
    members share their location.
    """
    pops = {lvl: PairPopulation.of(net, lvl) for lvl in LEVELS}
    t = net.meta
    jd = t.join_date - t.birth_date
    neg = int(np.count_nonzero(jd[~np.isnan(jd)] < 0))
    wanted = dict(ATTRIBUTES) if attributes is None else {a: dict(ATTRIBUTES)[a] for a in attributes}
    rows = []
    seeds = np.random.SeedSequence(seed).spawn(len(ATTRIBUTES) * 2)
    for idx, (attr, kind) in enumerate(ATTRIBUTES):
        if attr not in wanted or not _attribute_present(net, attr):
            continue
        row = HomophilyRow(attr, kind)
        for li, lvl in enumerate(LEVELS):
            key = "r_p" if lvl == "friendship" else "r_a"
            if kind == "distance" and lvl == "household":
                row.absent[key] = "household members share their location"
                continue
            s = int(seeds[idx * 2 + li].generate_state(1, np.uint64)[0])
            try:
                if kind == "categorical":
                    res = categorical_assortativity(net, pops[lvl], attr)
                elif kind == "numeric":
                    res = numeric_assortativity(net, pops[lvl], attr, n_perm, s, threads)
                else:
                    res = distance_assortativity(net, pops[lvl], dcor_sample, s, dcor_perm,
                                                 threads=threads)
            except DegenerateError as exc:
                row.absent[key] = str(exc)
                continue
            setattr(row, key, res)
        if row.r_p is not None and row.r_a is not None:
            row.r_rel = assortativity_ratio(row.r_a.r, row.r_p.r)
        rows.append(row)
    settings = {"seed": seed, "permutations": n_perm, "dcor_sample": dcor_sample,
                "dcor_permutations": dcor_perm, "missing_values": "pairs excluded per attribute"}
    return HomophilyReport(rows, neg, settings)
