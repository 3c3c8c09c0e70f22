"""Network statistics at profile and account level.

Degree distributions, power-law fits, Gini coefficient, clustering,
connectivity and path lengths, plus the demographic series (join dates,
age/sex pyramid, household sizes) that accompany them.
"""

from __future__ import annotations

import datetime as _dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components
from scipy.special import zeta

from .core_graph import Graph, MultiProfileNetwork, project_to_accounts
from .errors import DegenerateError, MpnetError


@dataclass
class PowerLawFit:
    gamma: float
    d_min: int
    n_tail: int
    ks_distance: float
    method: str = "discrete-mle"


def _tail_loglik(gamma, d_min, n, sum_log):
    return -gamma * sum_log - n * np.log(zeta(gamma, d_min))


def _fit_tail(tail: np.ndarray, d_min: int, method: str) -> float:
    n = len(tail)
    if method == "approx":
        return 1.0 + n / float(np.sum(np.log(tail / (d_min - 0.5))))
    sum_log = float(np.sum(np.log(tail)))
    res = minimize_scalar(lambda g: -_tail_loglik(g, d_min, n, sum_log),
                          bounds=(1.0 + 1e-6, 30.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def _ks_distance(tail_sorted: np.ndarray, gamma: float, d_min: int) -> float:
    """KS distance between a tail sample and the discrete power law on it.

    The model CDF is ``1 - zeta(gamma, x + 1) / zeta(gamma, d_min)``; the
    supremum is attained at, or just before, an observed value.
    """
    vals, counts = np.unique(tail_sorted, return_counts=True)
    emp = np.cumsum(counts) / len(tail_sorted)
    norm = zeta(gamma, d_min)
    model_at = 1.0 - zeta(gamma, vals + 1.0) / norm
    model_before = 1.0 - zeta(gamma, vals.astype(float)) / norm
    emp_before = np.concatenate([[0.0], emp[:-1]])
    return float(max(np.max(np.abs(emp - model_at)), np.max(np.abs(emp_before - model_before))))


def fit_power_law(samples, min_tail: int = 50, method: str = "mle",
                  d_min: Optional[int] = None) -> PowerLawFit:
    """Fit a discrete power law ``p(x) ~ x^-gamma`` to the tail ``x >= d_min``.

    ``d_min`` is chosen among the observed values by minimising the
    Kolmogorov-Smirnov distance between the tail and the fitted law, over
    tails with at least ``min_tail`` observations.  ``method="mle"`` maximises
    the exact discrete likelihood (Hurwitz zeta normalisation);
    ``method="approx"`` uses the closed form
    ``1 + n / sum(ln(x / (d_min - 1/2)))``.
    """
    x = np.asarray(samples)
    x = np.sort(x[x >= 1]).astype(np.int64)
    if len(x) == 0 or x[0] == x[-1]:
        raise DegenerateError("no tail: sample has fewer than two distinct positive values")
    if method not in ("mle", "approx"):
        raise ValueError(f"unknown method {method!r}")
    tag = "discrete-mle" if method == "mle" else "discrete-approx"
    candidates = [int(d_min)] if d_min is not None else np.unique(x)
    best = None
    for d in candidates:
        start = np.searchsorted(x, d)
        tail = x[start:]
        if len(tail) < max(min_tail, 2) or tail[0] == tail[-1]:
            if d_min is not None:
                raise DegenerateError("no tail: too few observations at or above d_min")
            break
        g = _fit_tail(tail, int(d), method)
        ks = _ks_distance(tail, g, int(d))
        if best is None or ks < best.ks_distance:
            best = PowerLawFit(g, int(d), len(tail), ks, tag)
    if best is None:
        raise DegenerateError(f"no tail with at least {min_tail} observations")
    return best


def gini_coefficient(samples) -> float:
    """Gini coefficient of a non-negative sample (0 = perfect equality)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if np.any(x < 0):
        raise ValueError("Gini coefficient needs non-negative values")
    total = x.sum()
    if len(x) == 0 or total <= 0:
        raise DegenerateError("Gini coefficient undefined for an all-zero sample")
    n = len(x)
    i = np.arange(1, n + 1)
    return float(np.sum((2 * i - n - 1) * x) / (n * total))


def degree_ccdf(degrees) -> list[tuple[int, float]]:
    """Points ``(d, P(D >= d))`` at every observed degree."""
    d = np.asarray(degrees)
    vals, counts = np.unique(d, return_counts=True)
    ge = np.cumsum(counts[::-1])[::-1] / len(d)
    return [(int(v), float(c)) for v, c in zip(vals, ge)]


def triangle_count(graph: Graph) -> int:
    """Number of triangles, counting along a degree ordering of the nodes."""
    deg = graph.degrees
    rank = np.empty(graph.n, dtype=np.int64)
    rank[np.lexsort((np.arange(graph.n), deg))] = np.arange(graph.n)
    e = graph.edge_array()
    if len(e) == 0:
        return 0
    lo = np.where(rank[e[:, 0]] < rank[e[:, 1]], e[:, 0], e[:, 1])
    hi = np.where(rank[e[:, 0]] < rank[e[:, 1]], e[:, 1], e[:, 0])
    L = sp.csr_matrix((np.ones(len(e)), (lo, hi)), shape=(graph.n, graph.n))
    return int(round((L @ L).multiply(L).sum()))


def wedge_count(graph: Graph) -> int:
    d = graph.degrees.astype(np.int64)
    return int(np.sum(d * (d - 1) // 2))


def clustering_coefficient(graph: Graph) -> float:
    """Global transitivity ``3 * triangles / wedges``."""
    w = wedge_count(graph)
    if w == 0:
        raise DegenerateError("clustering undefined: graph has no wedges")
    return 3.0 * triangle_count(graph) / w


def largest_component(graph: Graph) -> tuple[float, np.ndarray]:
    """Fraction of nodes in the largest connected component, and its nodes.

    Ties between equally large components go to the one containing the
    smallest node id.
    """
    if graph.n == 0:
        return 0.0, np.zeros(0, dtype=np.int64)
    _, labels = connected_components(graph.adjacency(), directed=False)
    sizes = np.bincount(labels)
    # labels are numbered in order of first appearance, so argmax picks the lowest node id on ties
    nodes = np.flatnonzero(labels == np.argmax(sizes))
    return len(nodes) / graph.n, nodes


@dataclass
class PathStats:
    diameter: int
    mean_path_length: float
    exact: bool
    sources: int


def _bitset_bfs(indptr, indices, sources, n):
    """Multi-source BFS with one bit per source (64 sources per word).

    Returns ``(eccentricity max, sum of distances, number of reached pairs)``
    over the given sources.
    """
    words = (len(sources) + 63) // 64
    seen = np.zeros((n, words), dtype=np.uint64)
    bit = np.left_shift(np.uint64(1), (np.arange(len(sources)) % 64).astype(np.uint64))
    seen[sources, np.arange(len(sources)) // 64] |= bit
    frontier = seen.copy()
    starts = indptr[:-1]
    level = 0
    total = 0
    reached = 0
    while True:
        nxt = np.bitwise_or.reduceat(frontier[indices], starts, axis=0)
        nxt &= ~seen
        found = int(np.bitwise_count(nxt).sum())
        if found == 0:
            return level, total, reached
        level += 1
        total += level * found
        reached += found
        seen |= nxt
        frontier = nxt


def path_statistics(graph: Graph, mode: str = "exact", k_sources: int = 1000,
                    seed: Optional[int] = None, threads: int = 1) -> PathStats:
    """Diameter and mean shortest-path length inside the largest component.

    ``mode="exact"`` runs a BFS from every node.  ``mode="sampled"`` runs BFS
    from ``k_sources`` uniformly drawn sources; the mean is then over the
    sampled source-target pairs and the diameter is only a lower bound
    (``exact`` is False).
    """
    _, nodes = largest_component(graph)
    if len(nodes) == 0:
        raise DegenerateError("empty largest connected component")
    lcc = graph.subgraph(nodes)
    n = lcc.n
    if n == 1:
        return PathStats(0, 0.0, True, 1)
    if mode == "exact":
        sources = np.arange(n)
    elif mode == "sampled":
        if seed is None:
            raise MpnetError("sampled path statistics need a seed")
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(n, size=min(k_sources, n), replace=False))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    # keep the gathered frontier (edges x words) near 64 MB
    per_chunk = 64 * max(1, min(64, (8 << 20) // max(len(lcc.indices), 1)))
    chunks = [sources[i:i + per_chunk] for i in range(0, len(sources), per_chunk)]

    def work(src):
        return _bitset_bfs(lcc.indptr, lcc.indices, src, n)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    diameter = max(p[0] for p in parts)
    total = sum(p[1] for p in parts)
    pairs = sum(p[2] for p in parts)
    if pairs != len(sources) * (n - 1):
        raise MpnetError("BFS did not reach the whole component")
    exact = mode == "exact" or len(sources) == n
    return PathStats(diameter, total / pairs, exact, len(sources))


# -- demographics -------------------------------------------------------------

def household_size_distribution(net: MultiProfileNetwork) -> list[tuple[int, int]]:
    sizes = net.household_sizes()
    vals, counts = np.unique(sizes[sizes > 0], return_counts=True)
    return [(int(v), int(c)) for v, c in zip(vals, counts)]


def join_date_histogram(net: MultiProfileNetwork, bin_days: int = 30) -> list[tuple[str, int]]:
    """Profile counts per join-date bin, labelled by each bin's first day."""
    j = net.meta.join_date
    if len(j) == 0:
        return []
    start = int(j.min())
    idx = (j - start) // bin_days
    counts = np.bincount(idx)
    return [(_dt.date.fromordinal(start + i * bin_days).isoformat(), int(c))
            for i, c in enumerate(counts)]


def age_sex_pyramid(net: MultiProfileNetwork, crawl_date: Optional[int] = None) -> dict:
    """Counts of profiles per whole year of age and sex at the crawl date.

    The crawl date defaults to the latest join date in the data.  Profiles
    without a birth date, or born after the crawl date, are skipped.
    """
    t = net.meta
    if crawl_date is None:
        crawl_date = int(t.join_date.max()) if net.n_profiles else 0
    b = t.birth_date
    ok = ~np.isnan(b) & (b <= crawl_date)
    ages = np.floor((crawl_date - b[ok]) / 365.2425).astype(int)
    sexes = t.sex[ok]
    out = {}
    for sex in sorted({s for s in sexes if s is not None}):
        mask = np.array([s == sex for s in sexes], dtype=bool)
        vals, counts = np.unique(ages[mask], return_counts=True)
        out[sex] = [(int(v), int(c)) for v, c in zip(vals, counts)]
    return {"crawl_date": _dt.date.fromordinal(crawl_date).isoformat() if crawl_date else None,
            "by_sex": out}


# -- report -------------------------------------------------------------------

@dataclass
class StatsReport:
    level: str
    node_count: int
    edge_count: int
    average_degree: float
    lcc_fraction: float
    power_law: Optional[PowerLawFit]
    gini: Optional[float]
    clustering: Optional[float]
    diameter: Optional[int]
    mean_path_length: Optional[float]
    path_exact: Optional[bool]
    degree_ccdf: list
    clustering_definition: str = "global transitivity"
    household_power_law: Optional[PowerLawFit] = None
    household_sizes: Optional[list] = None
    join_date_histogram: Optional[list] = None
    age_sex_pyramid: Optional[dict] = None
    nulls: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


LARGE_LCC = 10_000


def _guard(nulls, key, fn):
    try:
        return fn()
    except DegenerateError as exc:
        nulls[key] = str(exc)
        return None


def stats_report(net: MultiProfileNetwork, level: str = "profile", path_mode: str = "auto",
                 k_sources: int = 1000, seed: Optional[int] = None, threads: int = 1,
                 min_tail: int = 50) -> StatsReport:
    """Every structural statistic for one level of ``net``.

    ``path_mode="auto"`` is exact unless the largest component exceeds
    10,000 nodes, in which case ``k_sources`` BFS sources are sampled.
    """
    if net.n_profiles == 0:
        raise DegenerateError("empty network")
    if level == "profile":
        g = net.graph
    elif level == "account":
        g = project_to_accounts(net)
    else:
        raise ValueError(f"unknown level {level!r}")
    nulls = {}
    deg = g.degrees
    frac, nodes = largest_component(g)
    if path_mode == "auto":
        path_mode = "sampled" if len(nodes) > LARGE_LCC else "exact"
    paths = _guard(nulls, "paths", lambda: path_statistics(
        g, path_mode, k_sources=k_sources, seed=seed, threads=threads))
    rep = StatsReport(
        level=level, node_count=g.n, edge_count=g.edge_count,
        average_degree=2.0 * g.edge_count / g.n, lcc_fraction=frac,
        power_law=_guard(nulls, "power_law", lambda: fit_power_law(deg, min_tail=min_tail)),
        gini=_guard(nulls, "gini", lambda: gini_coefficient(deg)),
        clustering=_guard(nulls, "clustering", lambda: clustering_coefficient(g)),
        diameter=paths.diameter if paths else None,
        mean_path_length=paths.mean_path_length if paths else None,
        path_exact=paths.exact if paths else None,
        degree_ccdf=degree_ccdf(deg), nulls=nulls)
    if level == "profile":
        sizes = net.household_sizes()
        rep.household_sizes = household_size_distribution(net)
        rep.household_power_law = _guard(
            nulls, "household_power_law",
            lambda: fit_power_law(sizes[sizes > 0], min_tail=min_tail))
        rep.join_date_histogram = join_date_histogram(net)
        rep.age_sex_pyramid = age_sex_pyramid(net)
    return rep


def ccdf_tsv(points) -> str:
    return "".join(f"{d}\t{c!r}\n" for d, c in points)


def series_tsv(points) -> str:
    return "".join(f"{a}\t{b}\n" for a, b in points)
