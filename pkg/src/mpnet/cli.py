"""Command-line front end: ``mpnet <command> [options]``.

Exit codes: 0 on success, 1 on an analysis error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, is_dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import MpnetError
from .ingest import (FORMAT_VERSION, DatasetBundle, LoadReport, SynthConfig, generate_synthetic,
                     load_network, write_network)

log = logging.getLogger("mpnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _meta(args, command):
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "out", "threads", "format", "verbose")}
    return {"tool": "mpnet", "version": __version__, "format_version": FORMAT_VERSION,
            "command": command, "parameters": params}


# -- argument groups ----------------------------------------------------------

def _add_input(p, seed_required=False):
    g = p.add_argument_group("input")
    g.add_argument("--profiles", help="profiles.tsv")
    g.add_argument("--edges", help="edges.tsv")
    g.add_argument("--name", default="", help="dataset name recorded in outputs")
    intra = g.add_mutually_exclusive_group()
    intra.add_argument("--allow-intra-household", dest="intra", action="store_true", default=True)
    intra.add_argument("--forbid-intra-household", dest="intra", action="store_false")
    s = p.add_argument_group("synthetic input (instead of --profiles/--edges)")
    _add_synth(s)
    _add_common(p, seed_required)


def _add_synth(g, required=False):
    g.add_argument("--accounts", type=int, required=required, help="number of accounts")
    g.add_argument("--household-exponent", type=float, default=3.6)
    g.add_argument("--degree-exponent", type=float, default=2.5)
    g.add_argument("--mean-degree", type=float, default=8.0)
    g.add_argument("--intra-household-prob", type=float, default=0.0)
    g.add_argument("--correlation", type=float, default=None,
                   help="household correlation applied to every metadata attribute")
    g.add_argument("--burst-days", type=float, default=3.0,
                   help="mean join-date gap inside a household; negative = independent")
    g.add_argument("--location-coverage", type=float, default=0.95)
    g.add_argument("--max-household-size", type=int, default=10_000)


def _add_common(p, seed_required=False):
    p.add_argument("--seed", type=int, required=seed_required,
                   help="random seed" + (" (required)" if seed_required else ""))
    p.add_argument("--out", help="output directory (JSON goes to stdout when omitted)")
    p.add_argument("--format", action="append", choices=("json", "tsv"),
                   help="output formats; repeatable (default json)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def _synth_config(args) -> SynthConfig:
    from .ingest import DEFAULT_CORRELATION
    model = dict(DEFAULT_CORRELATION)
    if args.correlation is not None:
        model = {k: args.correlation for k in model}
    return SynthConfig(
        n_accounts=args.accounts, household_exponent=args.household_exponent,
        degree_exponent=args.degree_exponent, mean_degree=args.mean_degree,
        intra_household_edge_prob=args.intra_household_prob, metadata_model=model,
        join_date_burst_days=None if args.burst_days < 0 else args.burst_days,
        location_coverage=args.location_coverage, max_household_size=args.max_household_size,
        seed=args.seed)


def _network(args):
    files = args.profiles is not None or args.edges is not None
    synth = args.accounts is not None
    if files == synth:
        raise UsageError("give exactly one input: --profiles/--edges or --accounts")
    if files:
        if args.profiles is None or args.edges is None:
            raise UsageError("--profiles and --edges must be given together")
        report = LoadReport()
        net = load_network(DatasetBundle(args.profiles, args.edges, args.name, args.intra), report)
        return net, report.to_dict()
    if args.seed is None:
        raise UsageError("synthetic input needs --seed")
    return generate_synthetic(_synth_config(args)), None


def _formats(args):
    fmts = args.format or ["json"]
    if "tsv" in fmts and not args.out:
        raise UsageError("--format tsv needs --out")
    return fmts


class _Sink:
    def __init__(self, args):
        self.out = args.out
        self.formats = _formats(args)
        self.stdout_docs = []
        if self.out:
            os.makedirs(self.out, exist_ok=True)

    def json(self, name, doc):
        if "json" not in self.formats:
            return
        text = dump_json(doc)
        if self.out:
            self._write(name + ".json", text)
        else:
            self.stdout_docs.append(text)

    def tsv(self, name, text):
        if "tsv" in self.formats:
            self._write(name + ".tsv", text)

    def _write(self, fname, text):
        with open(os.path.join(self.out, fname), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def flush(self):
        for text in self.stdout_docs:
            sys.stdout.write(text)


# -- commands -----------------------------------------------------------------

def _stats(args, net, load, sink, meta):
    from .netstats import ccdf_tsv, series_tsv, stats_report
    levels = ("profile", "account") if args.level == "both" else (args.level,)
    reports = {}
    for level in levels:
        try:
            rep = stats_report(net, level, k_sources=args.sample, seed=args.seed,
                               threads=args.threads)
        except MpnetError as exc:
            if "seed" in str(exc):
                raise UsageError("sampled path statistics need --seed") from None
            raise
        reports[level] = rep
        sink.tsv(f"degree_ccdf_{level}", ccdf_tsv(rep.degree_ccdf))
    prof = reports.get("profile")
    if prof is not None:
        sink.tsv("household_sizes", series_tsv(prof.household_sizes))
        sink.tsv("join_dates", series_tsv(prof.join_date_histogram))
        rows = [f"{sex}\t{age}\t{c}\n" for sex, pts in prof.age_sex_pyramid["by_sex"].items()
                for age, c in pts]
        sink.tsv("age_sex_pyramid", "".join(rows))
    sink.tsv("stats", _stats_table(reports))
    doc = {"meta": meta, "load_report": load,
           "levels": {k: v.to_dict() for k, v in reports.items()}}
    sink.json("stats", doc)
    return doc


STATS_ROWS = (
    ("Vertices", "node_count"), ("Edges", "edge_count"), ("Average degree", "average_degree"),
    ("LCC fraction", "lcc_fraction"), ("Power-law exponent", None), ("Gini coefficient", "gini"),
    ("Clustering coefficient", "clustering"), ("Diameter", "diameter"),
    ("Mean path length", "mean_path_length"),
)


def _stats_table(reports):
    def cell(rep, attr):
        if attr is None:
            v = rep.power_law.gamma if rep.power_law else None
        else:
            v = getattr(rep, attr)
        if v is None:
            return "---"
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    levels = list(reports)
    lines = ["statistic\t" + "\t".join(levels)]
    for label, attr in STATS_ROWS:
        lines.append(label + "\t" + "\t".join(cell(reports[lv], attr) for lv in levels))
    return "\n".join(lines) + "\n"


def _homophily(args, net, load, sink, meta):
    from .homophily import homophily_report
    rep = homophily_report(net, seed=args.seed, n_perm=args.permutations,
                           dcor_sample=args.sample, threads=args.threads)
    doc = {"meta": meta, "load_report": load, "homophily": rep.to_dict()}
    sink.json("homophily", doc)
    sink.tsv("homophily", rep.to_tsv())
    return doc


def _spectral(args, net, load, sink, meta):
    from .spectral import spectral_report
    res = spectral_report(net, k=args.k, seed=args.seed, zero_diagonal=args.zero_diagonal)
    info = dict(res.info)
    heat = info.pop("heatmap")
    doc = {"meta": meta, "load_report": load,
           "spectral": {"delta": res.delta_coefficient, "k": info["k"],
                        "eigenvalues": res.eigenvalues, "delta_diagonal": np.diag(res.delta_matrix),
                        **info}}
    sink.json("spectral", doc)
    sink.tsv("spectral", f"k\tdelta\n{info['k']}\t{res.delta_coefficient:.4f}\n")
    sink.tsv("spectral_heatmap", "".join(f"{i}\t{j}\t{v!r}\n" for i, j, v in heat))
    sink.tsv("spectral_scatter", "".join(f"{lam!r}\t{d!r}\n" for lam, d in res.diagonal_pairs))
    return doc


def _predict(args, net, load, sink, meta):
    from .familytie import prediction_report
    rep = prediction_report(net, e=args.e, seed=args.seed, missing_policy=args.missing)
    doc = {"meta": meta, "load_report": load, "prediction": rep.to_dict()}
    sink.json("prediction", doc)
    sink.tsv("prediction", rep.to_tsv())
    if sink.out:
        sink._write("model.json", rep.model.to_json() + "\n")
    return doc


def _generate(args):
    if not args.out:
        raise UsageError("generate needs --out")
    net = generate_synthetic(_synth_config(args))
    os.makedirs(args.out, exist_ok=True)
    write_network(net, os.path.join(args.out, "profiles.tsv"), os.path.join(args.out, "edges.tsv"))
    return 0


ANALYSES = {"stats": _stats, "homophily": _homophily, "spectral": _spectral, "predict": _predict}
SEEDED = {"homophily", "spectral", "predict", "report-all"}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpnet", description="Multi-profile social network analysis.")
    p.add_argument("--version", action="version",
                   version=f"mpnet {__version__} (file format {FORMAT_VERSION})")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded synthetic network")
    _add_synth(g, required=True)
    _add_common(g, seed_required=True)

    for name, helptext in (("stats", "network statistics at both levels"),
                           ("homophily", "friendship and household assortativity"),
                           ("spectral", "spectral diagonality test"),
                           ("predict", "family tie prediction"),
                           ("report-all", "every analysis into one output bundle")):
        sp = sub.add_parser(name, help=helptext)
        _add_input(sp, seed_required=name in SEEDED)
        if name in ("stats", "report-all"):
            sp.add_argument("--level", choices=("profile", "account", "both"), default="both")
        if name in ("stats", "homophily", "report-all"):
            sp.add_argument("--sample", type=int, default=None,
                            help="BFS sources for stats / distance-correlation points for homophily")
        if name in ("homophily", "report-all"):
            sp.add_argument("--permutations", type=int, default=1000)
        if name in ("spectral", "report-all"):
            sp.add_argument("--k", type=int, default=250)
            sp.add_argument("--zero-diagonal", action="store_true")
        if name in ("predict", "report-all"):
            sp.add_argument("--e", type=int, default=None)
            sp.add_argument("--missing", choices=("impute", "drop"), default="impute")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mpnet: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            return _generate(args)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        sink = _Sink(args)
        net, load = _network(args)
        if args.command == "report-all":
            for name, fn in ANALYSES.items():
                sub_args = argparse.Namespace(**vars(args))
                if name == "homophily":
                    sub_args.sample = args.sample or 10_000
                else:
                    sub_args.sample = args.sample or 1000
                fn(sub_args, net, load, sink, _meta(args, name))
        else:
            if args.command == "homophily":
                args.sample = args.sample or 10_000
            elif args.command == "stats":
                args.sample = args.sample or 1000
            ANALYSES[args.command](args, net, load, sink, _meta(args, args.command))
        sink.flush()
        return 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mpnet: error: {exc}", file=sys.stderr)
        return 2
    except MpnetError as exc:
        print(f"mpnet: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
