"""Command-line driver: ``run``, ``validate``, ``kappa`` and ``audit``.

Experiments are described by a JSON config (see README).  Every CSV written
here depends only on the config and seed, never on the thread count; the
wall-clock time lives in ``manifest.json`` alone.
"""
import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from . import __version__
from .deviations import (
    CSV_HEADER,
    HypothesisError,
    MIN_TRIALS,
    ScalingSchedule,
    estimate_cumulant,
    estimate_lower_tail,
    estimate_upper_tail,
    estimates_to_csv,
    exhaustive_silt_distribution,
    lil_trace,
    oracle_audit,
    sample_renormalized,
)
from .expectation import expected_silt, expectation_table
from .polymer import COLLAPSE_HEADER, collapse_sweep, collapse_to_csv
from .variational import cross_validate, solve_kappa_grid, solve_kappa_ode
from .walk import PRESETS, build_step_distribution, preset

EXPERIMENTS = ("cumulant", "upper_tail", "lower_tail", "lil", "kappa", "polymer", "oracle_audit")
STATISTICAL = ("cumulant", "upper_tail", "lower_tail", "oracle_audit")
NEEDS_LAW = ("cumulant", "upper_tail", "lower_tail", "lil", "polymer")
NEEDS_KAPPA = ("cumulant", "upper_tail", "lil")
LIL_HEADER = ["n", "gamma", "upper_ratio", "lower_ratio", "running_max", "running_min", "seed"]
AUDIT_HEADER = ["check", "n", "exact", "observed", "repetitions", "trials", "passed", "seed"]

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    dist: object = "lazy"
    n_grid: list = field(default_factory=lambda: [256])
    schedule: str = "log"
    params: list = field(default_factory=lambda: [0.5])
    trials: int = 1000
    seed: int = 0
    out: str = "results"
    strict: bool = False
    kappa: object = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' key")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def canonical(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    version: str
    experiment: str
    kappa: dict
    wall_clock: float
    outputs: list
    flagged: int = 0
    diagnostics: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def resolve_dist(spec):
    if isinstance(spec, str):
        return preset(spec)
    return build_step_distribution([((int(a), int(b)), float(p)) for a, b, p in spec])


def _dist_diagnostics(cfg):
    if isinstance(cfg.dist, str):
        base = cfg.dist.split(":")[0]
        if base not in PRESETS:
            return None, [f"unknown preset {cfg.dist!r}; known presets: {sorted(PRESETS)}"]
    try:
        return resolve_dist(cfg.dist), []
    except Exception as exc:  # noqa: BLE001 - surfaced as a diagnostic
        return None, [f"invalid distribution: {exc}"]


def validate(cfg):
    """Dry-run checks; returns a list of human-readable diagnostics (empty when valid)."""
    if isinstance(cfg, dict):
        try:
            cfg = ExperimentConfig.from_dict(cfg)
        except (ConfigError, TypeError) as exc:
            return [str(exc)]
    diags = []
    if cfg.experiment not in EXPERIMENTS:
        return [f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}"]
    dist, d = _dist_diagnostics(cfg)
    diags += d
    if cfg.experiment == "kappa":
        return diags
    grid = list(cfg.n_grid)
    if not grid or any(int(n) != n or n < 1 for n in grid):
        diags.append("n_grid must be a nonempty list of positive integers")
    elif any(b <= a for a, b in zip(grid, grid[1:])):
        diags.append("n_grid must be strictly increasing")
    if cfg.experiment in STATISTICAL and cfg.trials < MIN_TRIALS:
        diags.append(f"trials = {cfg.trials} is below statistical minimum {MIN_TRIALS}")
    if dist is not None and cfg.experiment in NEEDS_LAW and not dist.strongly_aperiodic:
        diags.append(f"theorem hypotheses violated: {dist.name} is not strongly aperiodic")
    if cfg.experiment in ("cumulant", "upper_tail", "lower_tail"):
        try:
            sched = ScalingSchedule.parse(cfg.schedule)
            for n in grid:
                sched(n)
        except (HypothesisError, ValueError) as exc:
            diags.append(f"invalid schedule: {exc}")
        if not cfg.params:
            diags.append("params must list at least one value")
    if cfg.experiment == "lil":
        n_max = cfg.options.get("n_max", grid[-1] if grid else 0)
        if n_max < 1 << 16:
            diags.append(f"lil needs n_max >= 65536, got {n_max}")
    if cfg.experiment == "oracle_audit":
        for n in grid:
            if n > 9:
                diags.append(f"oracle audit enumerates paths; n = {n} exceeds 9")
    if cfg.experiment == "polymer":
        sweeps = cfg.options.get("sweeps", 100)
        burn = cfg.options.get("burn_in", sweeps // 2)
        if not sweeps > burn:
            diags.append("polymer needs sweeps > burn_in")
    return diags


def kappa_report(h=0.1, L=40.0, n_random=5, seed=0):
    grid = solve_kappa_grid(h=h, L=L, n_random=n_random, seed=seed)
    ode = solve_kappa_ode()
    res = cross_validate(grid, ode)
    return {
        "kappa": ode.kappa,
        "residual": res,
        "provenance": f"ode-shooting (r_max={ode.params['r_max']}, tol={ode.params['tol']}) "
        f"cross-checked by grid-ascent (h={h}, L={L})",
        "ode": json.loads(ode.to_json()),
        "grid": json.loads(grid.to_json()),
    }, grid


def _load_kappa(cfg):
    """kappa from the config or from a prior ``kappa`` run in the output directory."""
    k = cfg.kappa
    if isinstance(k, (int, float)):
        return {"kappa": float(k), "residual": None, "provenance": "user-supplied in config"}
    if isinstance(k, dict):
        if "kappa" not in k:
            raise ConfigError("kappa block needs a 'kappa' value")
        return {"kappa": float(k["kappa"]), "residual": k.get("residual"),
                "provenance": k.get("provenance", "user-supplied in config")}
    if isinstance(k, str):
        path = k
    else:
        path = os.path.join(cfg.out, "kappa.json")
    if not os.path.exists(path):
        raise ConfigError(
            f"kappa unavailable ({path} not found): run `siltlab kappa --out {cfg.out}` first "
            "or supply \"kappa\": {\"kappa\": value, \"provenance\": ...} in the config"
        )
    with open(path) as fh:
        d = json.load(fh)
    return {"kappa": float(d["kappa"]), "residual": d.get("residual"), "provenance": d.get("provenance", path)}


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _tails(cfg, dist, kappa, threads, cache):
    sched = ScalingSchedule.parse(cfg.schedule)
    kv = kappa["kappa"] if kappa else None
    out = []
    for i, n in enumerate(cfg.n_grid):
        g = sample_renormalized(dist, n, cfg.trials, cfg.seed, threads, cache, block=i)
        for p in cfg.params:
            if cfg.experiment == "upper_tail":
                e = estimate_upper_tail(dist, n, sched, p, seed=cfg.seed, kappa=kv, samples=g)
            elif cfg.experiment == "lower_tail":
                e = estimate_lower_tail(dist, n, sched, p, seed=cfg.seed, samples=g)
            else:
                e = estimate_cumulant(dist, n, sched, p, seed=cfg.seed, kappa=kv, samples=g)
            out.append(e)
    return out


def _lil(cfg, dist, threads, cache):
    n_max = cfg.options.get("n_max", cfg.n_grid[-1])
    seeds = [cfg.seed + s for s in range(cfg.options.get("seeds", 1))]
    expectation_table(dist, n_max, cache)
    traces = _pool_map(lambda s: lil_trace(dist, n_max, seed=s, cache_dir=cache), seeds, threads)
    text = ",".join(LIL_HEADER) + "\n" + "".join(t.to_csv().split("\n", 1)[1] for t in traces)
    return traces, text


def _audit(cfg, dist, threads):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AUDIT_HEADER)
    ok = True
    reps = cfg.options.get("repetitions", 100)
    for n in cfg.n_grid:
        exact = exhaustive_silt_distribution(dist, n)
        eb = float(expected_silt(dist, n))
        good = abs(exact.mean - eb) <= 1e-10
        ok &= good
        w.writerow(["mean_vs_expected_silt", n, repr(eb), repr(exact.mean), 1, 0, int(good), cfg.seed])
        fracs, truths = oracle_audit(dist, n, reps, cfg.trials, cfg.seed, threads=threads)
        for name, f in fracs.items():
            good = f >= 0.95
            ok &= good
            w.writerow([name, n, repr(truths[name]), repr(f), reps, cfg.trials, int(good), cfg.seed])
    return buf.getvalue(), ok


def run(cfg, threads=1, cache_dir=None):
    """Execute one experiment, write its CSV/JSON outputs and return (manifest, exit code)."""
    t0 = time.perf_counter()
    diags = validate(cfg)
    if diags:
        raise ConfigError("; ".join(diags))
    os.makedirs(cfg.out, exist_ok=True)
    cache = cache_dir or os.path.join(cfg.out, "cache")
    os.makedirs(cache, exist_ok=True)
    outputs = []
    flagged = 0
    kappa = None
    code = EXIT_OK
    if cfg.experiment == "kappa":
        opts = cfg.options
        report, grid = kappa_report(opts.get("h", 0.1), opts.get("L", 40.0), opts.get("n_random", 5), cfg.seed)
        path = os.path.join(cfg.out, "kappa.json")
        _write(path, json.dumps(report, indent=2, sort_keys=True) + "\n")
        _write(os.path.join(cfg.out, "kappa_trace.csv"), grid.trace_csv())
        outputs += [path, os.path.join(cfg.out, "kappa_trace.csv")]
        kappa = {k: report[k] for k in ("kappa", "residual", "provenance")}
    else:
        dist = resolve_dist(cfg.dist)
        if cfg.experiment in NEEDS_KAPPA:
            kappa = _load_kappa(cfg)
        if cfg.experiment in ("cumulant", "upper_tail", "lower_tail"):
            est = _tails(cfg, dist, kappa, threads, cache)
            flagged = sum(e.flagged for e in est)
            text = estimates_to_csv(est)
        elif cfg.experiment == "lil":
            _, text = _lil(cfg, dist, threads, cache)
        elif cfg.experiment == "polymer":
            o = cfg.options
            rows = collapse_sweep(dist, cfg.n_grid[-1], cfg.params, o.get("sweeps", 100), cfg.seed,
                                  o.get("burn_in"), o.get("chains", 64), threads)
            flagged = sum(r.low_acceptance for r in rows)
            text = collapse_to_csv(rows)
        else:
            text, ok = _audit(cfg, dist, threads)
            flagged = 0 if ok else 1
        path = os.path.join(cfg.out, f"{cfg.experiment}.csv")
        _write(path, text)
        outputs.append(path)
        if flagged and cfg.strict:
            code = EXIT_FLAGGED
    manifest = RunManifest(cfg.digest(), __version__, cfg.experiment, kappa, time.perf_counter() - t0,
                           outputs, flagged)
    mpath = os.path.join(cfg.out, "manifest.json")
    _write(mpath, manifest.to_json() + "\n")
    return manifest, code


SCHEMAS = {
    "tails": CSV_HEADER,
    "lil": LIL_HEADER,
    "polymer": COLLAPSE_HEADER,
    "audit": AUDIT_HEADER,
}


def read_rows(text, header):
    """Parse a CSV written by this module, checking the header and the column count."""
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != list(header):
        raise ValueError(f"header {rows[0]} does not match schema {list(header)}")
    for r in rows[1:]:
        if len(r) != len(header):
            raise ValueError(f"row {r} has {len(r)} fields, schema has {len(header)}")
    return [dict(zip(header, r)) for r in rows[1:]]


def _parser():
    p = argparse.ArgumentParser(prog="siltlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("run", "validate", "kappa", "audit"):
        s = sub.add_parser(verb)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--strict", action="store_true")
        s.add_argument("--out")
    return p


def _config_from_args(args):
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
    elif args.verb == "kappa":
        d = {"experiment": "kappa"}
    elif args.verb == "audit":
        d = {"experiment": "oracle_audit", "n_grid": [8], "trials": 2000}
    else:
        raise ConfigError(f"`{args.verb}` needs --config")
    if args.verb == "kappa":
        d["experiment"] = "kappa"
    if args.verb == "audit":
        d["experiment"] = "oracle_audit"
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out:
        d["out"] = args.out
    if args.strict:
        d["strict"] = True
    return ExperimentConfig.from_dict(d)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.verb == "validate":
            diags = validate(cfg)
            for d in diags:
                print(d)
            if not diags:
                print("ok")
            return EXIT_ERROR if diags else EXIT_OK
        manifest, code = run(cfg, threads=args.threads)
    except (ConfigError, HypothesisError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(manifest.to_json())
    return code


if __name__ == "__main__":
    sys.exit(main())
