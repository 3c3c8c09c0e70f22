"""Reading, writing and synthesising multi-profile networks.

File format
-----------
``profiles.tsv``
    Header row followed by one row per profile, tab separated, UTF-8::

        id  account  race  sex  coloration  weight  weight_range  birth_date  join_date  lat  lon

    Empty fields are missing values.  Dates are ISO-8601 calendar dates.  An
    optional trailing ``location`` column holds a free-text place name to be
    resolved by :func:`geocode_locations`.
``edges.tsv``
    Two profile ids per line separated by whitespace.  Lines starting with
    ``%`` or ``#`` are comments.
"""

from __future__ import annotations

import datetime as _dt
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .core_graph import MultiProfileNetwork, ProfileTable
from .errors import MpnetError, ParseError, ValidationError

log = logging.getLogger(__name__)

PROFILE_COLUMNS = ("id", "account", "race", "sex", "coloration", "weight",
                   "weight_range", "birth_date", "join_date", "lat", "lon")
FORMAT_VERSION = 1


@dataclass
class DatasetBundle:
    profiles_path: str
    edges_path: str
    dataset_name: str = ""
    allows_intra_household_edges: bool = True


@dataclass
class LoadReport:
    profiles_read: int = 0
    edges_read: int = 0
    self_loops_dropped: int = 0
    duplicates_dropped: int = 0
    missing: dict = field(default_factory=dict)
    intra_household_edges: int = 0
    birth_after_join: int = 0

    def to_dict(self) -> dict:
        return {
            "profiles_read": self.profiles_read,
            "edges_read": self.edges_read,
            "self_loops_dropped": self.self_loops_dropped,
            "duplicates_dropped": self.duplicates_dropped,
            "missing": dict(sorted(self.missing.items())),
            "intra_household_edges": self.intra_household_edges,
            "birth_after_join": self.birth_after_join,
        }


def parse_date(s: str) -> int:
    return _dt.date.fromisoformat(s).toordinal()


def format_date(day) -> str:
    return _dt.date.fromordinal(int(day)).isoformat()


def _id_order(ids):
    """Sort key putting integer-like ids in numeric order."""
    if all(i.lstrip("-").isdigit() for i in ids):
        return sorted(ids, key=int)
    return sorted(ids)


def load_network(bundle: DatasetBundle, report: Optional[LoadReport] = None) -> MultiProfileNetwork:
    """Load and validate a network from a ``profiles.tsv``/``edges.tsv`` pair.

    Handles are assigned in sorted id order so that a written-then-reloaded
    network is identical to the original.
    """
    if report is None:
        report = LoadReport()
    for p in (bundle.profiles_path, bundle.edges_path):
        if not os.path.exists(p):
            raise MpnetError(f"no such file: {p}")

    rows = {}
    with open(bundle.profiles_path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split("\t")
        missing_cols = [c for c in PROFILE_COLUMNS if c not in header]
        if missing_cols:
            raise ParseError(f"missing column(s) {', '.join(missing_cols)}",
                             bundle.profiles_path, 1)
        col = {c: header.index(c) for c in header}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < len(header):
                parts += [""] * (len(header) - len(parts))
            pid = parts[col["id"]]
            if not pid:
                raise ParseError("empty profile id", bundle.profiles_path, lineno)
            if pid in rows:
                raise ParseError(f"duplicate profile id {pid!r}", bundle.profiles_path, lineno)
            rec = {c: parts[col[c]] for c in col}
            if not rec["account"]:
                raise ParseError(f"profile {pid!r} has no account", bundle.profiles_path, lineno)
            rows[pid] = (lineno, rec)
    report.profiles_read = len(rows)

    pids = _id_order(list(rows))
    pindex = {p: i for i, p in enumerate(pids)}
    aids = _id_order(sorted({rec["account"] for _, rec in rows.values()}))
    aindex = {a: i for i, a in enumerate(aids)}
    n = len(pids)

    cols = {c: [None] * n for c in ("race", "sex", "coloration", "weight_range", "location_text")}
    num = {c: np.full(n, np.nan) for c in ("weight", "birth_date", "lat", "lon")}
    join = np.zeros(n, dtype=np.int64)
    account_of = np.zeros(n, dtype=np.int64)
    missing = Counter()
    for pid in pids:
        lineno, rec = rows[pid]
        u = pindex[pid]
        account_of[u] = aindex[rec["account"]]
        for c in ("race", "sex", "coloration", "weight_range"):
            cols[c][u] = rec[c] or None
            missing[c] += not rec[c]
        cols["location_text"][u] = rec.get("location") or None
        try:
            if rec["weight"]:
                num["weight"][u] = float(rec["weight"])
            if rec["birth_date"]:
                num["birth_date"][u] = parse_date(rec["birth_date"])
            if not rec["join_date"]:
                raise ValueError("join_date is required")
            join[u] = parse_date(rec["join_date"])
            if rec["lat"] or rec["lon"]:
                num["lat"][u] = float(rec["lat"])
                num["lon"][u] = float(rec["lon"])
        except ValueError as exc:
            raise ParseError(f"profile {pid!r}: {exc}", bundle.profiles_path, lineno) from None
        missing["weight"] += not rec["weight"]
        missing["birth_date"] += not rec["birth_date"]
        missing["location"] += not (rec["lat"] and rec["lon"])
    report.missing = dict(missing)

    edges = []
    with open(bundle.edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s[0] in "%#":
                continue
            parts = s.split()
            if len(parts) < 2:
                raise ParseError("expected two profile ids", bundle.edges_path, lineno)
            for p in parts[:2]:
                if p not in pindex:
                    raise ParseError(f"unknown profile id {p!r}", bundle.edges_path, lineno)
            edges.append((pindex[parts[0]], pindex[parts[1]]))
    report.edges_read = len(edges)
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges):
        intra = (account_of[edges[:, 0]] == account_of[edges[:, 1]]) & (edges[:, 0] != edges[:, 1])
        report.intra_household_edges = int(np.unique(np.sort(edges[intra], axis=1), axis=0).shape[0])

    try:
        meta = ProfileTable(n, join_date=join, **cols, **num)
    except ValidationError as exc:
        raise ParseError(str(exc), bundle.profiles_path) from None
    net = MultiProfileNetwork.build(
        account_of, edges, meta, profile_ids=pids, account_ids=aids,
        allows_intra_household_edges=bundle.allows_intra_household_edges,
        name=bundle.dataset_name)
    report.self_loops_dropped = net.dropped_self_loops
    report.duplicates_dropped = net.dropped_duplicates
    report.birth_after_join = meta.birth_after_join()
    if net.dropped_self_loops or net.dropped_duplicates:
        log.warning("dropped %d self-loops and %d duplicate edges",
                    net.dropped_self_loops, net.dropped_duplicates)
    return net


def _fmt_float(x) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_network(net: MultiProfileNetwork, profiles_path: str, edges_path: str) -> None:
    """Write ``net`` in the TSV format read by :func:`load_network`."""
    t = net.meta
    with_text = any(v is not None for v in t.location_text)
    header = list(PROFILE_COLUMNS) + (["location"] if with_text else [])
    with open(profiles_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for u in range(net.n_profiles):
            row = [
                net.profile_ids[u], net.account_ids[net.account_of[u]],
                t.race[u] or "", t.sex[u] or "", t.coloration[u] or "",
                _fmt_float(t.weight[u]), t.weight_range[u] or "",
                "" if np.isnan(t.birth_date[u]) else format_date(t.birth_date[u]),
                format_date(t.join_date[u]), _fmt_float(t.lat[u]), _fmt_float(t.lon[u]),
            ]
            if with_text:
                row.append(t.location_text[u] or "")
            fh.write("\t".join(row) + "\n")
    ids = net.profile_ids
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in net.graph.edge_array():
            fh.write(f"{ids[u]}\t{ids[v]}\n")


# -- synthetic networks -------------------------------------------------------

DEFAULT_CORRELATION = {
    "race": 0.5, "sex": 0.1, "coloration": 0.2, "weight": 0.3, "weight_range": 0.3,
    "birth_date": 0.3,
}
_RACES = tuple(f"race{i:02d}" for i in range(20))
_COLORS = tuple(f"color{i}" for i in range(8))
_WEIGHT_RANGES = ("1-10 lbs", "11-25 lbs", "26-50 lbs", "51-100 lbs", "100+ lbs")
_EPOCH = _dt.date(2004, 1, 1).toordinal()
_SPAN_DAYS = 3650


@dataclass
class SynthConfig:
    """Parameters of :func:`generate_synthetic`.

    ``metadata_model`` maps attribute names (``race``, ``sex``,
    ``coloration``, ``weight``, ``weight_range``, ``birth_date``) to the
    probability that a household member copies the household's value instead
    of drawing from the global base distribution.  ``join_date_burst_days``
    is the mean gap between consecutive join dates inside a household;
    ``None`` draws every join date independently.  ``location_coverage`` is
    the fraction of households with a known (shared) location.
    """

    n_accounts: int = 1000
    household_exponent: float = 3.6
    degree_exponent: float = 2.5
    mean_degree: float = 8.0
    intra_household_edge_prob: float = 0.0
    metadata_model: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CORRELATION))
    join_date_burst_days: Optional[float] = 3.0
    location_coverage: float = 0.95
    n_cities: int = 300
    max_household_size: int = 10_000
    seed: int = 0

    def validate(self) -> None:
        if self.n_accounts < 1:
            raise ValidationError("n_accounts must be positive")
        if not self.household_exponent > 1:
            raise ValidationError("household_exponent must be > 1")
        if not self.degree_exponent > 2:
            raise ValidationError("degree_exponent must be > 2 for a finite mean degree")
        if not self.mean_degree > 0:
            raise ValidationError("mean_degree must be > 0")
        if not 0 <= self.intra_household_edge_prob <= 1:
            raise ValidationError("intra_household_edge_prob must lie in [0, 1]")
        for k, v in self.metadata_model.items():
            if k not in DEFAULT_CORRELATION:
                raise ValidationError(f"unknown metadata attribute {k!r}")
            if not 0 <= v <= 1:
                raise ValidationError(f"correlation for {k!r} must lie in [0, 1]")
        if self.join_date_burst_days is not None and self.join_date_burst_days < 0:
            raise ValidationError("join_date_burst_days must be non-negative")
        if not 0 <= self.location_coverage <= 1:
            raise ValidationError("location_coverage must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


def discrete_power_law_pmf(exponent: float, xmin: int, xmax: int) -> tuple[np.ndarray, np.ndarray]:
    support = np.arange(xmin, xmax + 1)
    w = support.astype(float) ** -exponent
    return support, w / w.sum()


def sample_discrete_power_law(rng: np.random.Generator, exponent: float, size: int,
                              xmin: int = 1, xmax: int = 10_000) -> np.ndarray:
    """Inverse-CDF draws from ``P(x) ~ x^-exponent`` on ``xmin..xmax``."""
    support, pmf = discrete_power_law_pmf(exponent, xmin, xmax)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return support[np.searchsorted(cdf, rng.random(size), side="right")]


def _zipf_weights(k, s=1.0):
    w = 1.0 / np.arange(1, k + 1) ** s
    return w / w.sum()


def _household_categorical(rng, account_of, first, tokens, base, corr):
    n = len(account_of)
    idx = rng.choice(len(tokens), size=n, p=base)
    copy = rng.random(n) < corr
    anchor = idx[first[account_of]]
    idx = np.where(copy, anchor, idx)
    out = np.empty(n, dtype=object)
    out[:] = [tokens[i] for i in idx]
    return out


def _preferential_attachment(rng, n, account_of, m_mean, attractiveness):
    """Linear preferential attachment with initial attractiveness.

    New node ``t`` attaches to ``m_t`` distinct earlier nodes chosen with
    probability proportional to ``degree + attractiveness`` (shifted linear
    kernel, giving a degree exponent of ``3 + attractiveness / m``).
    Same-household targets are rejected.
    """
    order = rng.permutation(n)
    lo = int(math.floor(m_mean))
    ms = lo + (rng.random(n) < (m_mean - lo))
    stubs = np.empty(int(2 * ms.sum()) + 2, dtype=np.int64)
    n_stubs = 0
    deg = np.zeros(n, dtype=np.int64)
    edges = []
    # seed clique so that early kernels stay positive when attractiveness < 0
    n_seed = min(n, lo + 2)
    for a in range(n_seed):
        for b in range(a):
            u, v = order[a], order[b]
            if account_of[u] != account_of[v]:
                edges.append((u, v))
                stubs[n_stubs:n_stubs + 2] = (u, v)
                n_stubs += 2
                deg[u] += 1
                deg[v] += 1
    stubs = np.concatenate([stubs, np.empty(len(edges) * 2, dtype=np.int64)])
    for t in range(max(n_seed, 1), n):
        u = order[t]
        want = min(int(ms[t]), t)
        chosen = set()
        tries = 0
        while len(chosen) < want and tries < 50 * (want + 1):
            tries += 1
            if n_stubs == 0:
                v = order[rng.integers(t)]
            else:
                total = n_stubs + attractiveness * t
                if attractiveness >= 0 and rng.random() * total >= n_stubs:
                    v = order[rng.integers(t)]
                else:
                    v = stubs[rng.integers(n_stubs)]
                    if attractiveness < 0 and \
                            rng.random() * deg[v] >= max(deg[v] + attractiveness, 0.05):
                        continue
            if v in chosen or account_of[v] == account_of[u]:
                continue
            chosen.add(v)
        for v in sorted(chosen):
            edges.append((u, v))
            stubs[n_stubs] = u
            stubs[n_stubs + 1] = v
            n_stubs += 2
            deg[u] += 1
            deg[v] += 1
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def generate_synthetic(cfg: SynthConfig) -> MultiProfileNetwork:
    """Generate a seeded synthetic multi-profile network.

    Draw order is fixed, so equal configurations give identical networks.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    corr = {k: 0.0 for k in DEFAULT_CORRELATION}
    corr.update(cfg.metadata_model)

    sizes = sample_discrete_power_law(rng, cfg.household_exponent, cfg.n_accounts,
                                      1, cfg.max_household_size)
    account_of = np.repeat(np.arange(cfg.n_accounts, dtype=np.int64), sizes)
    n = len(account_of)
    first = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    m_mean = cfg.mean_degree / 2
    attractiveness = max(m_mean * (cfg.degree_exponent - 3), -0.99 * max(math.floor(m_mean), 1))
    edges = _preferential_attachment(rng, n, account_of, m_mean, attractiveness)
    if cfg.intra_household_edge_prob > 0:
        from .core_graph import family_pair_array
        tmp = MultiProfileNetwork.build(account_of, np.zeros((0, 2)), n_accounts=cfg.n_accounts)
        fam = family_pair_array(tmp)
        keep = rng.random(len(fam)) < cfg.intra_household_edge_prob
        edges = np.concatenate([edges, fam[keep]])

    race = _household_categorical(rng, account_of, first, _RACES, _zipf_weights(20), corr["race"])
    sex = _household_categorical(rng, account_of, first, ("female", "male"), np.array([0.5, 0.5]), corr["sex"])
    color = _household_categorical(rng, account_of, first, _COLORS, _zipf_weights(8, 0.7), corr["coloration"])
    wrange = _household_categorical(rng, account_of, first, _WEIGHT_RANGES,
                                    np.array([0.25, 0.3, 0.25, 0.15, 0.05]), corr["weight_range"])

    weight = np.round(rng.lognormal(np.log(10.0), 0.35, n), 1)
    copy = rng.random(n) < corr["weight"]
    weight = np.where(copy, weight[first[account_of]], weight)

    if cfg.join_date_burst_days is None:
        join = _EPOCH + rng.integers(0, _SPAN_DAYS, n)
    else:
        start = _EPOCH + rng.integers(0, _SPAN_DAYS, cfg.n_accounts)
        gaps = rng.exponential(cfg.join_date_burst_days, n) if cfg.join_date_burst_days > 0 \
            else np.zeros(n)
        gaps[first] = 0.0
        cum = np.cumsum(gaps)
        offset = cum - cum[first[account_of]]
        join = start[account_of] + np.floor(offset).astype(np.int64)
    join = join.astype(np.int64)

    join_age = np.floor(rng.exponential(700.0, n))
    copy = rng.random(n) < corr["birth_date"]
    join_age = np.where(copy, join_age[first[account_of]], join_age)
    birth = (join - join_age).astype(float)

    city_w = _zipf_weights(cfg.n_cities)
    city_lat = np.round(rng.uniform(-60, 70, cfg.n_cities), 4)
    city_lon = np.round(rng.uniform(-180, 180, cfg.n_cities), 4)
    city = rng.choice(cfg.n_cities, size=cfg.n_accounts, p=city_w)
    located = rng.random(cfg.n_accounts) < cfg.location_coverage
    lat = np.where(located, city_lat[city], np.nan)[account_of]
    lon = np.where(located, city_lon[city], np.nan)[account_of]

    meta = ProfileTable(n, race=race, sex=sex, coloration=color, weight=weight,
                        weight_range=wrange, birth_date=birth, join_date=join, lat=lat, lon=lon)
    width = len(str(n))
    pids = tuple(f"{i:0{width}d}" for i in range(n))
    aids = tuple(str(i) for i in range(cfg.n_accounts))
    return MultiProfileNetwork.build(
        account_of, edges, meta, profile_ids=pids, account_ids=aids,
        allows_intra_household_edges=cfg.intra_household_edge_prob > 0,
        name=f"synthetic-{cfg.seed}")


# -- geocoding ----------------------------------------------------------------

Geocoder = Callable[[str], Optional[tuple]]


@dataclass
class GeocodeResult:
    network: MultiProfileNetwork
    resolved: int = 0
    queries: int = 0
    cache_hits: int = 0
    failures: dict = field(default_factory=dict)


def geocode_locations(net: MultiProfileNetwork, provider: Geocoder,
                      cache: Optional[dict] = None) -> GeocodeResult:
    """Fill in coordinates for profiles that only have a location string.

    ``provider`` maps a place name to ``(lat, lon)`` or ``None``; exceptions
    it raises are recorded per string and do not abort the run.  ``cache`` is
    shared across calls when given.
    """
    if cache is None:
        cache = {}
    t = net.meta
    lat, lon = t.lat.copy(), t.lon.copy()
    res = GeocodeResult(net)
    for u in range(net.n_profiles):
        text = t.location_text[u]
        if not text or not text.strip() or not np.isnan(lat[u]):
            continue
        if text in cache:
            res.cache_hits += 1
            coords = cache[text]
        else:
            res.queries += 1
            try:
                coords = provider(text)
            except Exception as exc:  # provider failures are per-string
                res.failures[text] = str(exc)
                coords = None
            cache[text] = coords
        if coords is not None:
            lat[u], lon[u] = float(coords[0]), float(coords[1])
            res.resolved += 1
    cols = {c: t.column(c) for c in ProfileTable.columns}
    cols.update(lat=lat, lon=lon)
    res.network = net.with_meta(ProfileTable(net.n_profiles, **cols))
    return res
