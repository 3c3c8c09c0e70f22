"""In-memory multi-profile networks and their structural projections.

A multi-profile network is ``G = (V, W, E, m)``: profiles ``V``, accounts
``W``, undirected friendships ``E`` between profiles and the total map
``m`` from profiles to accounts.  Profiles and accounts are addressed by
dense integer handles; the original string identifiers live in side
tables.  Profile metadata is stored column-wise (one array per attribute)
with ``None``/NaN marking missing values.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

CATEGORICAL_ATTRIBUTES = ("race", "sex", "coloration", "weight_range")
NUMERIC_ATTRIBUTES = ("weight", "birth_date", "join_date")
# join date given to profiles of networks built without metadata
PLACEHOLDER_JOIN_DATE = _dt.date(1970, 1, 1).toordinal()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProfileMeta:
    """Metadata of a single profile; dates are ordinal day numbers."""

    race: Optional[str] = None
    sex: Optional[str] = None
    coloration: Optional[str] = None
    weight: Optional[float] = None
    weight_range: Optional[str] = None
    birth_date: Optional[int] = None
    join_date: int = 0
    location: Optional[tuple[float, float]] = None
    location_text: Optional[str] = None

    @property
    def join_date_iso(self) -> str:
        return _dt.date.fromordinal(self.join_date).isoformat()


class ProfileTable:
    """Column store of profile metadata.

    Categorical columns are object arrays holding ``str`` or ``None``;
    ``weight``, ``birth_date``, ``lat`` and ``lon`` are float arrays with NaN
    for missing values; ``join_date`` is a required int64 array of ordinal
    day numbers.
    """

    columns = ("race", "sex", "coloration", "weight", "weight_range",
               "birth_date", "join_date", "lat", "lon", "location_text")

    def __init__(self, n, race=None, sex=None, coloration=None, weight=None,
                 weight_range=None, birth_date=None, join_date=None,
                 lat=None, lon=None, location_text=None):
        def cat(col):
            if col is None:
                return _frozen(np.full(n, None, dtype=object))
            out = np.empty(n, dtype=object)
            out[:] = [None if (v is None or v == "") else str(v) for v in col]
            return _frozen(out)

        def num(col):
            if col is None:
                return _frozen(np.full(n, np.nan))
            return _frozen(np.asarray(col, dtype=float).reshape(n))

        if join_date is None:
            raise ValidationError("join_date is required for every profile")
        self.n = n
        self.race = cat(race)
        self.sex = cat(sex)
        self.coloration = cat(coloration)
        self.weight_range = cat(weight_range)
        self.location_text = cat(location_text)
        self.weight = num(weight)
        self.birth_date = num(birth_date)
        self.lat = num(lat)
        self.lon = num(lon)
        self.join_date = _frozen(np.asarray(join_date, dtype=np.int64).reshape(n))

        if np.any(self.weight[~np.isnan(self.weight)] < 0):
            raise ValidationError("weight must be non-negative")
        has_lat, has_lon = ~np.isnan(self.lat), ~np.isnan(self.lon)
        if np.any(has_lat != has_lon):
            raise ValidationError("latitude and longitude must be given together")
        if np.any(np.abs(self.lat[has_lat]) > 90) or np.any(np.abs(self.lon[has_lon]) > 180):
            raise ValidationError("coordinates out of range")

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def has_location(self) -> np.ndarray:
        return ~np.isnan(self.lat)

    def present(self, name: str) -> np.ndarray:
        """Boolean mask of profiles where attribute ``name`` is known."""
        col = self.column(name)
        if col.dtype == object:
            return np.array([v is not None for v in col], dtype=bool)
        if name in ("lat", "lon", "location"):
            return self.has_location()
        return ~np.isnan(col.astype(float))

    def birth_after_join(self) -> int:
        b = self.birth_date
        ok = ~np.isnan(b)
        return int(np.count_nonzero(b[ok] > self.join_date[ok]))

    def equals(self, other: "ProfileTable") -> bool:
        if self.n != other.n:
            return False
        for name in self.columns:
            a, b = self.column(name), other.column(name)
            if a.dtype == object:
                if list(a) != list(b):
                    return False
            elif not np.array_equal(a, b, equal_nan=a.dtype.kind == "f"):
                return False
        return True

    def subset(self, idx: np.ndarray) -> "ProfileTable":
        return ProfileTable(len(idx), **{c: self.column(c)[idx] for c in self.columns})


class Graph:
    """Simple undirected graph stored as sorted, symmetric CSR adjacency."""

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = _frozen(np.asarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.asarray(indices, dtype=np.int64))
        self._adj = None

    @classmethod
    def from_edge_array(cls, n: int, edges: np.ndarray) -> "Graph":
        """Build from an ``(m, 2)`` array of distinct unordered loop-free edges."""
        indptr, indices = _csr_from_edges(n, edges)
        return cls(n, indptr, indices)

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def adjacency(self) -> sp.csr_matrix:
        if self._adj is None:
            data = np.ones(len(self.indices), dtype=float)
            self._adj = sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
        return self._adj

    def edge_array(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` array with ``u < v``, sorted lexicographically."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    def subgraph(self, nodes: np.ndarray) -> "Graph":
        nodes = np.sort(np.asarray(nodes, dtype=np.int64))
        relabel = np.full(self.n, -1, dtype=np.int64)
        relabel[nodes] = np.arange(len(nodes))
        e = self.edge_array()
        keep = (relabel[e[:, 0]] >= 0) & (relabel[e[:, 1]] >= 0)
        return Graph.from_edge_array(len(nodes), relabel[e[keep]])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, edges={self.edge_count})"


class AccountGraph(Graph):
    """The account-level graph ``G_a = (W, m(E))``."""

    @property
    def accounts(self) -> int:
        return self.n


def _csr_from_edges(n, edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    both = np.concatenate([edges, edges[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, both[:, 1].copy()


def clean_edges(edges: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Canonicalise an edge list.

    Returns the sorted, deduplicated ``(m, 2)`` array with ``u < v`` and the
    counts of dropped self-loops and duplicates.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = edges[:, 0] == edges[:, 1]
    e = np.sort(edges[~loops], axis=1)
    uniq = np.unique(e, axis=0) if len(e) else e.reshape(0, 2)
    return uniq, int(loops.sum()), int(len(e) - len(uniq))


@dataclass(eq=False)
class MultiProfileNetwork:
    """Immutable multi-profile social network ``G = (V, W, E, m)``.

    Use :meth:`build` to construct one from raw parts; it canonicalises the
    edge list and enforces the invariants.
    """

    profile_ids: tuple
    account_ids: tuple
    account_of: np.ndarray
    graph: Graph
    meta: ProfileTable
    allows_intra_household_edges: bool = True
    name: str = ""
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0
    _households: Optional[tuple] = field(default=None, repr=False)

    @classmethod
    def build(cls, account_of: Sequence[int], edges, meta: Optional[ProfileTable] = None,
              *, profile_ids=None, account_ids=None, n_accounts=None,
              allows_intra_household_edges=True, name="") -> "MultiProfileNetwork":
        account_of = np.asarray(account_of, dtype=np.int64)
        n = len(account_of)
        if n_accounts is None:
            n_accounts = len(account_ids) if account_ids is not None else (
                int(account_of.max()) + 1 if n else 0)
        if n and (account_of.min() < 0 or account_of.max() >= n_accounts):
            raise ValidationError("account_of must map every profile to an account in 0..|W|-1")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise ValidationError("edge endpoint outside 0..|V|-1")
        clean, loops, dups = clean_edges(edges)
        if not allows_intra_household_edges and len(clean):
            same = account_of[clean[:, 0]] == account_of[clean[:, 1]]
            if same.any():
                u, v = clean[np.argmax(same)]
                pu = profile_ids[u] if profile_ids is not None else u
                pv = profile_ids[v] if profile_ids is not None else v
                raise ValidationError(
                    f"{int(same.sum())} intra-household edge(s) present but forbidden, "
                    f"e.g. {pu} -- {pv}")
        if meta is None:
            meta = ProfileTable(n, join_date=np.full(n, PLACEHOLDER_JOIN_DATE, dtype=np.int64))
        if meta.n != n:
            raise ValidationError("metadata length differs from profile count")
        if profile_ids is None:
            profile_ids = tuple(str(i) for i in range(n))
        if account_ids is None:
            account_ids = tuple(str(i) for i in range(n_accounts))
        return cls(tuple(profile_ids), tuple(account_ids), _frozen(account_of),
                   Graph.from_edge_array(n, clean), meta,
                   bool(allows_intra_household_edges), name, loops, dups)

    @property
    def n_profiles(self) -> int:
        return len(self.account_of)

    @property
    def n_accounts(self) -> int:
        return len(self.account_ids)

    @property
    def edge_count(self) -> int:
        return self.graph.edge_count

    @property
    def degrees(self) -> np.ndarray:
        return self.graph.degrees

    def households(self) -> tuple[np.ndarray, np.ndarray]:
        """Members grouped by account as CSR ``(indptr, members)``."""
        if self._households is None:
            order = np.argsort(self.account_of, kind="stable")
            counts = np.bincount(self.account_of, minlength=self.n_accounts)
            indptr = np.zeros(self.n_accounts + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            object.__setattr__(self, "_households", (_frozen(indptr), _frozen(order)))
        return self._households

    def household_sizes(self) -> np.ndarray:
        return np.bincount(self.account_of, minlength=self.n_accounts)

    def incidence(self) -> sp.csr_matrix:
        """Profile-to-account incidence matrix ``R`` (``|V| x |W|``)."""
        n = self.n_profiles
        return sp.csr_matrix((np.ones(n), self.account_of, np.arange(n + 1)),
                             shape=(n, self.n_accounts))

    def profile(self, u: int) -> ProfileMeta:
        t = self.meta
        loc = None if np.isnan(t.lat[u]) else (float(t.lat[u]), float(t.lon[u]))
        return ProfileMeta(
            race=t.race[u], sex=t.sex[u], coloration=t.coloration[u],
            weight=None if np.isnan(t.weight[u]) else float(t.weight[u]),
            weight_range=t.weight_range[u],
            birth_date=None if np.isnan(t.birth_date[u]) else int(t.birth_date[u]),
            join_date=int(t.join_date[u]), location=loc, location_text=t.location_text[u])

    def with_meta(self, meta: ProfileTable) -> "MultiProfileNetwork":
        return MultiProfileNetwork(self.profile_ids, self.account_ids, self.account_of,
                                   self.graph, meta, self.allows_intra_household_edges,
                                   self.name, self.dropped_self_loops, self.dropped_duplicates)

    def __eq__(self, other):
        if not isinstance(other, MultiProfileNetwork):
            return NotImplemented
        return (self.profile_ids == other.profile_ids
                and self.account_ids == other.account_ids
                and np.array_equal(self.account_of, other.account_of)
                and self.graph == other.graph
                and self.meta.equals(other.meta))

    def __repr__(self):
        return (f"MultiProfileNetwork(name={self.name!r}, profiles={self.n_profiles}, "
                f"accounts={self.n_accounts}, edges={self.edge_count})")


def project_to_accounts(net: MultiProfileNetwork) -> AccountGraph:
    """Identify same-account profiles; loops vanish and multi-edges collapse.

    Every account is a node of the result, including accounts left without
    edges.
    """
    e = net.graph.edge_array()
    a = net.account_of[e]
    a = a[a[:, 0] != a[:, 1]]
    a = np.unique(np.sort(a, axis=1), axis=0) if len(a) else a.reshape(0, 2)
    indptr, indices = _csr_from_edges(net.n_accounts, a)
    return AccountGraph(net.n_accounts, indptr, indices)


def family_pair_count(net: MultiProfileNetwork) -> int:
    s = net.household_sizes()
    return int(np.sum(s * (s - 1) // 2))


def family_pairs(net: MultiProfileNetwork) -> Iterator[tuple[int, int]]:
    """Yield every unordered same-account pair ``(u, v)`` with ``u < v`` once."""
    indptr, members = net.households()
    for i in range(net.n_accounts):
        mem = np.sort(members[indptr[i]:indptr[i + 1]])
        for a in range(len(mem)):
            for b in range(a + 1, len(mem)):
                yield int(mem[a]), int(mem[b])


def family_pair_array(net: MultiProfileNetwork) -> np.ndarray:
    """All family pairs as an ``(M, 2)`` array, grouped by account."""
    indptr, members = net.households()
    sizes = np.diff(indptr)
    out = []
    for s in np.unique(sizes[sizes > 1]):
        accts = np.flatnonzero(sizes == s)
        block = np.sort(members[indptr[accts][:, None] + np.arange(s)], axis=1)
        iu, ju = np.triu_indices(s, 1)
        pairs = np.stack([block[:, iu], block[:, ju]], axis=2).reshape(-1, 2)
        out.append((np.repeat(accts, len(iu)), pairs))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    accts = np.concatenate([o[0] for o in out])
    pairs = np.concatenate([o[1] for o in out])
    order = np.lexsort((pairs[:, 1], pairs[:, 0], accts))
    return pairs[order]


def family_operator_apply(net: MultiProfileNetwork, x: np.ndarray,
                          zero_diagonal: bool = False) -> np.ndarray:
    """Compute ``F x`` with ``F = R R^T`` without materialising ``F``.

    ``x`` may be a vector over profiles or a matrix with one column per
    vector.  With ``zero_diagonal`` the unit diagonal of ``F`` is dropped.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != net.n_profiles:
        raise ValidationError(f"vector has length {x.shape[0]}, expected {net.n_profiles}")
    R = net.incidence()
    y = R @ (R.T @ x)
    if zero_diagonal:
        y = y - x
    return y
