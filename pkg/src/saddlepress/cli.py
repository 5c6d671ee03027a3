"""Config-driven experiment runner.

    saddlepress <command> --config run.toml [--out DIR] [--seed N] [--threads N]

Commands: orbits, pressure, separated, volume, escape, boxdim, bound, oracle.
Every run writes manifest.json, summary.json and one or more CSV tables.
Exit status: 0 success, 2 invalid config, 3 the requested quantity does not
exist for this system (for example no saddles at the requested alpha).
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .core import StatusError, make_potential
from .geometry import (box_dimension, dimension_bound, escape_rate, expansion_rate, philox,
                       survivor_cloud)
from .oracle import (ReducibleError, WeightedShift, log_trace_periodic_sum, markov_equilibrium,
                     transfer_pressure)
from .orbits import SaddleFilter, empirical_constant, periodic_orbits
from .pressure import (bowen_fixpoint_pressure, p_sp_banded, p_sp_limit, random_separated_samples,
                       separated_growth, volume_pressure)
from .systems import Region, make_system

COMMANDS = ("orbits", "pressure", "separated", "volume", "escape", "boxdim", "bound", "oracle")
STOCHASTIC = ("separated", "escape", "boxdim", "bound")
EXIT_OK, EXIT_CONFIG, EXIT_STATUS = 0, 2, 3


class ConfigError(ValueError):
    """Invalid config; the message starts with the offending field."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------------------
# config


SECTIONS = {
    "system": {"name", "params"},
    "potential": {"kind", "params"},
    "filter": {"alpha", "c", "beta"},
    "pressure": {"window", "resolution"},
    "separated": {"epsilon", "window", "samples"},
    "escape": {"region", "samples", "n_max", "window"},
    "expansion": {"resolution", "window"},
    "boxdim": {"count", "depth", "scales"},
    "oracle": {"transitions", "weights", "window"},
    "orbits": {"n_max", "method"},
}
TOP_LEVEL = {"seed", "out"}


@dataclass
class ExperimentConfig:
    system: str
    system_params: dict = field(default_factory=dict)
    potential: str = "zero"
    potential_params: dict = field(default_factory=dict)
    alpha: list = field(default_factory=lambda: [0.9])
    c: list = field(default_factory=lambda: [1.0])
    beta: float | None = None
    window: list = field(default_factory=lambda: [6, 12])
    resolution: int = 64
    epsilon: list = field(default_factory=lambda: [0.25])
    separated_window: list = field(default_factory=lambda: [2, 7])
    separated_samples: int = 40000
    region: dict | None = None
    escape_samples: int = 10**6
    n_max: int = 14
    escape_window: list | None = None
    expansion_resolution: int = 64
    expansion_window: list = field(default_factory=lambda: [1, 8])
    cloud_count: int = 20000
    cloud_depth: int = 10
    scales: list = field(default_factory=lambda: [0.25, 0.0625, 0.015625, 0.00390625])
    transitions: list | None = None
    weights: list | None = None
    oracle_window: list = field(default_factory=lambda: [1, 12])
    orbit_n_max: int = 8
    method: str = "auto"
    seed: int | None = None
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = copy.deepcopy(raw)
        for key, val in raw.items():
            if key in TOP_LEVEL:
                continue
            if key not in SECTIONS:
                raise ConfigError(key, "unknown key")
            if not isinstance(val, dict):
                raise ConfigError(key, "must be a table")
            for sub in val:
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")
        sect = lambda k: raw.get(k, {})
        if "name" not in sect("system"):
            raise ConfigError("system.name", "required")
        kw = {"system": sect("system")["name"], "system_params": sect("system").get("params", {})}
        pot = sect("potential")
        kw["potential"] = pot.get("kind", "zero")
        kw["potential_params"] = pot.get("params", {})
        mapping = [
            ("filter", "alpha", "alpha"), ("filter", "c", "c"), ("filter", "beta", "beta"),
            ("pressure", "window", "window"), ("pressure", "resolution", "resolution"),
            ("separated", "epsilon", "epsilon"), ("separated", "window", "separated_window"),
            ("separated", "samples", "separated_samples"),
            ("escape", "region", "region"), ("escape", "samples", "escape_samples"),
            ("escape", "n_max", "n_max"), ("escape", "window", "escape_window"),
            ("expansion", "resolution", "expansion_resolution"), ("expansion", "window", "expansion_window"),
            ("boxdim", "count", "cloud_count"), ("boxdim", "depth", "cloud_depth"), ("boxdim", "scales", "scales"),
            ("oracle", "transitions", "transitions"), ("oracle", "weights", "weights"),
            ("oracle", "window", "oracle_window"),
            ("orbits", "n_max", "orbit_n_max"), ("orbits", "method", "method"),
        ]
        for s, k, attr in mapping:
            if k in sect(s):
                kw[attr] = sect(s)[k]
        for k in TOP_LEVEL:
            if k in raw:
                kw[k] = raw[k]
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        """Nested form that from_dict parses back to an equal config."""
        out = {
            "system": {"name": self.system, "params": self.system_params},
            "potential": {"kind": self.potential, "params": self.potential_params},
            "filter": {"alpha": self.alpha, "c": self.c},
            "pressure": {"window": self.window, "resolution": self.resolution},
            "separated": {"epsilon": self.epsilon, "window": self.separated_window,
                          "samples": self.separated_samples},
            "escape": {"samples": self.escape_samples, "n_max": self.n_max},
            "expansion": {"resolution": self.expansion_resolution, "window": self.expansion_window},
            "boxdim": {"count": self.cloud_count, "depth": self.cloud_depth, "scales": self.scales},
            "oracle": {"window": self.oracle_window},
            "orbits": {"n_max": self.orbit_n_max, "method": self.method},
        }
        if self.beta is not None:
            out["filter"]["beta"] = self.beta
        if self.region is not None:
            out["escape"]["region"] = self.region
        if self.escape_window is not None:
            out["escape"]["window"] = self.escape_window
        if self.transitions is not None:
            out["oracle"]["transitions"] = self.transitions
        if self.weights is not None:
            out["oracle"]["weights"] = self.weights
        if self.seed is not None:
            out["seed"] = self.seed
        if self.out is not None:
            out["out"] = self.out
        return out

    def validate(self):
        def num_list(name, v, positive=False):
            if not isinstance(v, list) or not v:
                raise ConfigError(name, "must be a nonempty list")
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError(name, "must contain numbers")
            if positive and not all(x > 0 for x in v):
                raise ConfigError(name, "entries must be > 0")

        def window(name, v):
            if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v)
                    and 1 <= v[0] <= v[1]):
                raise ConfigError(name, "must be [lo, hi] with 1 <= lo <= hi")

        def pos_int(name, v):
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(name, "must be a positive integer")

        if not isinstance(self.system_params, dict):
            raise ConfigError("system.params", "must be a table")
        if not isinstance(self.potential_params, dict):
            raise ConfigError("potential.params", "must be a table")
        num_list("filter.alpha", self.alpha, positive=True)
        num_list("filter.c", self.c, positive=True)
        if any(c > 1 for c in self.c):
            raise ConfigError("filter.c", "entries must lie in (0, 1]")
        if self.beta is not None and not isinstance(self.beta, (int, float)):
            raise ConfigError("filter.beta", "must be a number")
        window("pressure.window", self.window)
        window("separated.window", self.separated_window)
        window("expansion.window", self.expansion_window)
        window("oracle.window", self.oracle_window)
        if self.escape_window is not None:
            window("escape.window", self.escape_window)
        num_list("separated.epsilon", self.epsilon, positive=True)
        num_list("boxdim.scales", self.scales, positive=True)
        for name, v in [("pressure.resolution", self.resolution), ("separated.samples", self.separated_samples),
                        ("escape.samples", self.escape_samples), ("escape.n_max", self.n_max),
                        ("expansion.resolution", self.expansion_resolution), ("boxdim.count", self.cloud_count),
                        ("boxdim.depth", self.cloud_depth), ("orbits.n_max", self.orbit_n_max)]:
            pos_int(name, v)
        if self.method not in ("auto", "symbolic", "newton"):
            raise ConfigError("orbits.method", "must be auto, symbolic or newton")
        if self.region is not None:
            r = self.region
            if not isinstance(r, dict) or not (r.get("torus") is True or {"lo", "hi"} <= set(r)):
                raise ConfigError("escape.region", "must be {torus = true} or {lo = [...], hi = [...]}")
        if self.seed is not None and (not isinstance(self.seed, int) or not 0 <= self.seed < 2**64):
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if (self.transitions is None) != (self.weights is None):
            raise ConfigError("oracle.weights" if self.weights is None else "oracle.transitions",
                              "transitions and weights go together")

    def require(self, command):
        if command in STOCHASTIC and self.seed is None:
            raise ConfigError("seed", f"required for command {command!r}")
        if command == "oracle" and self.transitions is None:
            raise ConfigError("oracle.transitions", "required for command 'oracle'")

    def build_system(self):
        try:
            return make_system(self.system, **self.system_params)
        except KeyError as e:
            raise ConfigError("system.name", e.args[0]) from None
        except (TypeError, ValueError) as e:
            raise ConfigError("system.params", str(e)) from None

    def build_potential(self):
        try:
            return make_potential(self.potential, **self.potential_params)
        except KeyError as e:
            raise ConfigError("potential.kind", e.args[0]) from None
        except TypeError as e:
            raise ConfigError("potential.params", str(e)) from None

    def build_region(self, system):
        if self.region is None:
            return system.reference
        if self.region.get("torus"):
            return Region.full_torus(system.dim)
        try:
            return Region.box(self.region["lo"], self.region["hi"])
        except (TypeError, ValueError) as e:
            raise ConfigError("escape.region", str(e)) from None


def load_config(path) -> tuple[ExperimentConfig, bytes]:
    data = Path(path).read_bytes()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError("config", f"cannot parse: {e}") from None
    return ExperimentConfig.from_dict(raw), data


# ---------------------------------------------------------------------------
# report


def fmt(x):
    return "%.12g" % x


def clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    return obj


@dataclass
class ReportBundle:
    command: str
    config: ExperimentConfig
    config_hash: str
    tables: dict = field(default_factory=dict)      # file name -> (header, rows)
    summary: dict = field(default_factory=dict)
    ledger: list = field(default_factory=list)
    status: str = "ok"

    def add_table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(float(v))
    return str(v)


def emit_report(bundle: ReportBundle, out_dir) -> list:
    """Write the CSV tables, summary.json and manifest.json; returns the file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, (header, rows) in sorted(bundle.tables.items()):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        (out / name).write_text(buf.getvalue())
        names.append(name)
    summary = {"command": bundle.command, "system": bundle.config.system, "status": bundle.status,
               "tables": names, "ledger": bundle.ledger, **bundle.summary}
    _write_json(out / "summary.json", summary)
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = None
    if epoch is not None:
        stamp = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc).isoformat()
    manifest = {"tool": "saddlepress", "version": __version__, "command": bundle.command,
                "config_sha256": bundle.config_hash, "created": stamp,
                "files": names + ["summary.json"], "config": bundle.config.to_dict()}
    _write_json(out / "manifest.json", manifest)
    return names + ["summary.json", "manifest.json"]


def _write_json(path, obj):
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def _series_rows(series):
    return [(r.n, r.Q, r.log_q_over_n, r.count, r.fallback) for r in series.rows]


PRESSURE_HEADER = ("n", "Q", "logQ_over_n", "count", "fallback")


def run_orbits(cfg, b, threads):
    system = cfg.build_system()
    rows, counts = [], []
    d = system.dim
    for n in range(1, cfg.orbit_n_max + 1):
        orbits = periodic_orbits(system, n, cfg.method)
        counts.append({"n": n, "orbits": len(orbits), "points": sum(o.minimal_period for o in orbits),
                       "saddles": sum(o.saddle for o in orbits)})
        for o in orbits:
            if o.minimal_period != n:
                continue
            cm = [empirical_constant(system, o, a) for a in cfg.alpha]
            ex = o.exponents if o.exponents is not None else np.full(d, np.nan)
            rows.append([n, *o.representative, *ex, o.saddle, *cm, o.residual])
    header = (["period"] + [f"x{i}" for i in range(d)] + [f"exponent{i}" for i in range(d)]
              + ["saddle"] + [f"c_max_alpha_{fmt(a)}" for a in cfg.alpha] + ["residual"])
    b.add_table("orbits.csv", header, rows)
    b.summary["counts"] = counts


def run_pressure(cfg, b, threads):
    system, phi = cfg.build_system(), cfg.build_potential()
    estimates = []
    all_fallback = True
    for a in cfg.alpha:
        if cfg.beta is not None:
            ests = [p_sp_banded(system, phi, a, cfg.beta, c, cfg.window, cfg.resolution) for c in cfg.c]
            est = ests[-1]
            schedule = [{"alpha": a, "c": c, "value": e.value} for c, e in zip(cfg.c, ests)]
            fb = all(e.series.all_fallback for e in ests)
        else:
            est = p_sp_limit(system, phi, a, sorted(cfg.c, reverse=True), cfg.window, cfg.resolution)
            schedule = est.schedule
            fb = est.status != "ok"
        all_fallback &= fb
        name = f"pressure_alpha_{fmt(a)}.csv"
        b.add_table(name, PRESSURE_HEADER, _series_rows(est.series))
        estimates.append({**est.to_dict(), "alpha": a, "beta": cfg.beta, "schedule": schedule,
                          "all_fallback": fb, "table": name})
    b.summary["estimates"] = estimates
    b.summary["estimate"] = estimates[0]["value"]
    if all_fallback:
        b.status = "no saddles at this α"


def run_separated(cfg, b, threads):
    system, phi = cfg.build_system(), cfg.build_potential()
    samples = random_separated_samples(system, cfg.separated_samples, cfg.seed, cfg.cloud_depth)
    out = []
    for eps in cfg.epsilon:
        est = separated_growth(system, phi, eps, cfg.separated_window, samples)
        name = f"separated_eps_{fmt(eps)}.csv"
        b.add_table(name, PRESSURE_HEADER, _series_rows(est.series))
        out.append({**est.to_dict(), "epsilon": eps, "table": name})
    b.summary["estimates"] = out
    b.summary["estimate"] = out[-1]["value"]


def run_volume(cfg, b, threads):
    system = cfg.build_system()
    est = volume_pressure(system, sorted(cfg.alpha, reverse=True), sorted(cfg.c, reverse=True),
                          cfg.window, cfg.resolution)
    b.add_table("volume.csv", PRESSURE_HEADER, _series_rows(est.series))
    b.summary["estimate"] = est.value
    b.summary["volume"] = est.to_dict()
    if est.status != "ok":
        b.status = est.status


def _escape(cfg, system, threads):
    V = cfg.build_region(system)
    return escape_rate(system, V, cfg.n_max, cfg.escape_samples, cfg.seed, cfg.escape_window, threads=threads)


def _cloud(cfg, system):
    if system.reference.torus:
        return system.reference.sample(philox(cfg.seed, 0), cfg.cloud_count)
    return survivor_cloud(system, cfg.cloud_count, cfg.cloud_depth, cfg.seed)


def run_escape(cfg, b, threads):
    system = cfg.build_system()
    est = _escape(cfg, system, threads)
    b.add_table("escape.csv", ("n", "survivors", "p_n"), est.table())
    b.summary["escape"] = est.to_dict()
    b.summary["estimate"] = est.upper


def run_boxdim(cfg, b, threads):
    system = cfg.build_system()
    est = box_dimension(_cloud(cfg, system), cfg.scales)
    b.add_table("boxdim.csv", ("rho", "N"), est.table())
    b.summary["boxdim"] = est.to_dict()
    b.summary["estimate"] = est.value


def run_bound(cfg, b, threads):
    system = cfg.build_system()
    esc = _escape(cfg, system, threads)
    exp = expansion_rate(system, cfg.expansion_resolution, tuple(cfg.expansion_window))
    box = box_dimension(_cloud(cfg, system), cfg.scales)
    check = dimension_bound(system, esc, exp, box)
    b.add_table("escape.csv", ("n", "survivors", "p_n"), esc.table())
    b.add_table("expansion.csv", ("n", "a_n"), list(zip(exp.ns.tolist(), exp.a.tolist())))
    b.add_table("boxdim.csv", ("rho", "N"), box.table())
    b.summary.update({"escape": esc.to_dict(), "expansion": exp.to_dict(), "boxdim": box.to_dict(),
                      "bound": check.to_dict(), "estimate": check.bound})
    b.ledger.append(check.ledger_row())


def run_oracle(cfg, b, threads):
    try:
        W = WeightedShift(cfg.transitions, cfg.weights)
        P = transfer_pressure(W)
        mu = markov_equilibrium(W)
    except ReducibleError as e:
        raise StatusError(str(e)) from None
    except ValueError as e:
        raise ConfigError("oracle", str(e)) from None
    lo, hi = cfg.oracle_window
    rows = [(n, log_trace_periodic_sum(W, n)) for n in range(lo, hi + 1)]
    b.add_table("oracle_trace.csv", ("n", "log_trace"), rows)
    b.summary["oracle"] = {"pressure": P, "entropy": mu.entropy, "integral": mu.integral,
                           "free_energy": mu.free_energy, "stationary": mu.stationary,
                           "shift": W.to_dict()}
    b.summary["estimate"] = P
    gap = abs(mu.free_energy - P)
    b.ledger.append(f"variational_check: {'PASS' if gap <= 1e-9 else 'FAIL'} "
                    f"free_energy={fmt(mu.free_energy)} pressure={fmt(P)}")


RUNNERS = {"orbits": run_orbits, "pressure": run_pressure, "separated": run_separated,
           "volume": run_volume, "escape": run_escape, "boxdim": run_boxdim, "bound": run_bound,
           "oracle": run_oracle}


def run_experiment(cfg: ExperimentConfig, command: str, config_hash: str = "", threads: int = 1) -> ReportBundle:
    if command not in RUNNERS:
        raise ConfigError("command", f"unknown command {command!r}; available: {', '.join(COMMANDS)}")
    cfg.require(command)
    b = ReportBundle(command, cfg, config_hash)
    try:
        RUNNERS[command](cfg, b, threads)
    except StatusError as e:
        b.status = str(e)
    return b


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="saddlepress", description="Saddle-orbit pressure experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", default=None, help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--threads", type=int, default=1, help="worker threads for Monte-Carlo batches")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg, data = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        out = args.out or cfg.out or "out"
        bundle = run_experiment(cfg, args.command, hashlib.sha256(data).hexdigest(), args.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    emit_report(bundle, out)
    if bundle.status != "ok":
        print(f"status: {bundle.status}", file=sys.stderr)
        return EXIT_STATUS
    est = bundle.summary.get("estimate")
    print(f"{args.command}: {'done' if est is None else fmt(est)} -> {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
