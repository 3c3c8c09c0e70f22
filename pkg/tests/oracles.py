"""Brute-force reference implementations used as test oracles.

Everything here is deliberately naive: pure Python loops over pairs and
dense matrices, so that it shares no code path with the package.
"""

import itertools
import math

import networkx as nx
import numpy as np


def to_networkx(graph):
    g = nx.Graph()
    g.add_nodes_from(range(graph.n))
    for u in range(graph.n):
        for v in graph.neighbors(u):
            g.add_edge(u, int(v))
    return g


def projection_edges(net):
    out = set()
    for u in range(net.n_profiles):
        for v in net.graph.neighbors(u):
            a, b = int(net.account_of[u]), int(net.account_of[v])
            if a != b:
                out.add((min(a, b), max(a, b)))
    return out


def family_pairs(net):
    return {(u, v) for u, v in itertools.combinations(range(net.n_profiles), 2)
            if net.account_of[u] == net.account_of[v]}


def lcc_and_paths(graph):
    g = to_networkx(graph)
    comp = max(nx.connected_components(g), key=len)
    sub = g.subgraph(comp)
    if len(comp) == 1:
        return 1 / graph.n, 0, 0.0
    return len(comp) / graph.n, nx.diameter(sub), nx.average_shortest_path_length(sub)


def neighbour_overlap(graph, u, v):
    a = set(graph.neighbors(u).tolist())
    b = set(graph.neighbors(v).tolist())
    common = len(a & b)
    union = len(a | b)
    return common, (common / union if union else 0.0)


def categorical_r(pairs):
    """Assortativity of a list of (category, category) pairs, dict-based."""
    e = {}
    for x, y in pairs:
        e[(x, y)] = e.get((x, y), 0) + 0.5
        e[(y, x)] = e.get((y, x), 0) + 0.5
    total = sum(e.values())
    cats = sorted({c for k in e for c in k})
    a = {c: sum(v for (x, _), v in e.items() if x == c) / total for c in cats}
    trace = sum(e.get((c, c), 0) for c in cats) / total
    s = sum(a[c] ** 2 for c in cats)
    return (trace - s) / (1 - s)


def categorical_jackknife(pairs):
    r = categorical_r(pairs)
    acc = 0.0
    for i in range(len(pairs)):
        rest = pairs[:i] + pairs[i + 1:]
        try:
            acc += (categorical_r(rest) - r) ** 2
        except ZeroDivisionError:
            pass
    return math.sqrt(acc)


def numeric_r(pairs):
    x = [a for a, b in pairs] + [b for a, b in pairs]
    y = [b for a, b in pairs] + [a for a, b in pairs]
    n = len(x)
    mx = sum(x) / n
    cov = sum((xi - mx) * (yi - mx) for xi, yi in zip(x, y)) / n
    var = sum((xi - mx) ** 2 for xi in x) / n
    return cov / var


def great_circle(p, q, radius=6371.0):
    la1, lo1, la2, lo2 = map(math.radians, (p[0], p[1], q[0], q[1]))
    h = (math.sin((la2 - la1) / 2) ** 2
         + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2)
    return 2 * radius * math.asin(math.sqrt(min(1.0, h)))


def _haversine_matrix(p, radius=6371.0):
    lat, lon = np.radians(p[:, 0]), np.radians(p[:, 1])
    h = (np.sin((lat[:, None] - lat[None, :]) / 2) ** 2
         + np.cos(lat)[:, None] * np.cos(lat)[None, :]
         * np.sin((lon[:, None] - lon[None, :]) / 2) ** 2)
    return 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_correlation(a, b):
    """Textbook double-centred distance correlation with the haversine metric."""
    A = _haversine_matrix(np.asarray(a, dtype=float))
    B = _haversine_matrix(np.asarray(b, dtype=float))

    def centre(d):
        return d - d.mean(0) - d.mean(1)[:, None] + d.mean()

    A, B = centre(A), centre(B)
    dcov = (A * B).mean()
    return math.sqrt(max(dcov, 0) / math.sqrt((A * A).mean() * (B * B).mean()))


def family_matrix(net):
    n = net.n_profiles
    F = np.zeros((n, n))
    for u in range(n):
        for v in range(n):
            F[u, v] = float(net.account_of[u] == net.account_of[v])
    return F


def dense_adjacency(graph):
    A = np.zeros((graph.n, graph.n))
    for u in range(graph.n):
        for v in graph.neighbors(u):
            A[u, v] = 1.0
    return A


def auc_by_enumeration(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    acc = 0.0
    for p in pos:
        for q in neg:
            acc += 1.0 if p > q else 0.5 if p == q else 0.0
    return acc / (len(pos) * len(neg))
