"""Synthetic network configurations shared by the tests and acceptance checks."""

import numpy as np

from mpnet.core_graph import MultiProfileNetwork, ProfileTable
from mpnet.ingest import SynthConfig

#: Planted household signal: shared location, bursty join dates and strong
#: metadata correlation inside households.
PLANTED = dict(
    n_accounts=5000, household_exponent=2.5, max_household_size=30,
    metadata_model={k: 0.8 for k in ("race", "sex", "coloration", "weight",
                                      "weight_range", "birth_date")},
    join_date_burst_days=3.0, location_coverage=0.95, seed=20140401,
)

#: No planted signal: metadata and join dates are drawn independently of the
#: household and no location is known.  Households are capped at ten profiles
#: so that family pairs are not dominated by a few large, mutually dependent
#: households; the AUC sampling noise then stays well below 0.02.
NULL = dict(
    n_accounts=20_000, household_exponent=2.5, max_household_size=10,
    metadata_model={}, join_date_burst_days=None, location_coverage=0.0,
    seed=20140402,
)

#: Household-size exponent recovery at scale.
RECOVERY = dict(n_accounts=50_000, household_exponent=3.6, seed=3)


def planted_config(**over) -> SynthConfig:
    return SynthConfig(**{**PLANTED, **over})


def null_config(**over) -> SynthConfig:
    return SynthConfig(**{**NULL, **over})


RACES = ("a", "b", "c")
CITIES = ((52.52, 13.40), (48.86, 2.35), (40.71, -74.01), (35.68, 139.69), (-33.87, 151.21))


def random_network(seed, max_profiles=50, p_edge=None, allow_intra=True):
    """Small random multi-profile network with partly missing metadata."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, max_profiles + 1))
    n_accounts = int(rng.integers(1, n + 1))
    account_of = np.concatenate([np.arange(n_accounts),
                                 rng.integers(0, n_accounts, n - n_accounts)])
    rng.shuffle(account_of)
    p = p_edge if p_edge is not None else float(rng.uniform(0.05, 0.4))
    iu, ju = np.triu_indices(n, 1)
    mask = rng.random(len(iu)) < p
    if not allow_intra:
        mask &= account_of[iu] != account_of[ju]
    edges = np.column_stack([iu[mask], ju[mask]])

    def maybe(values):
        out = [values[i] for i in rng.integers(0, len(values), n)]
        return [None if rng.random() < 0.15 else v for v in out]

    city = rng.integers(0, len(CITIES), n)
    lat = np.array([CITIES[c][0] for c in city])
    lon = np.array([CITIES[c][1] for c in city])
    gone = rng.random(n) < 0.15
    lat[gone] = np.nan
    lon[gone] = np.nan
    weight = rng.uniform(1, 20, n).round(1)
    weight[rng.random(n) < 0.15] = np.nan
    birth = rng.integers(730000, 733000, n).astype(float)
    birth[rng.random(n) < 0.15] = np.nan
    meta = ProfileTable(
        n, race=maybe(RACES), sex=maybe(("f", "m")), coloration=maybe(("x", "y", "z", "w")),
        weight=weight, weight_range=maybe(("1-10", "11-25")), birth_date=birth,
        join_date=rng.integers(732000, 734000, n), lat=lat, lon=lon)
    return MultiProfileNetwork.build(account_of, edges, meta, n_accounts=n_accounts,
                                     allows_intra_household_edges=allow_intra)
