"""Analysis toolkit for multi-profile social networks."""

__version__ = "0.1.0"

from .core_graph import (AccountGraph, Graph, MultiProfileNetwork, ProfileMeta, ProfileTable,
                         family_operator_apply, family_pair_array, family_pairs,
                         project_to_accounts)
from .errors import ConvergenceError, DegenerateError, MpnetError, ParseError, ValidationError
from .ingest import DatasetBundle, SynthConfig, generate_synthetic, load_network, write_network
