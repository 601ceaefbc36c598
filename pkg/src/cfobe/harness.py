"""Experiment presets, result files, complexity accounting and the command line.

A run evaluates every (grid point, drop) pair independently, possibly in a
process pool, and writes three files to the output directory:

``results.csv``
    one row per UE (or AP-UE pair for per-AP bounds), prefixed by the grid
    columns and the drop index;
``summary.csv``
    one row per (grid point, scheme, bound, method) with ``ue = "all"``, the
    average SE over UEs and drops, its batch-means standard error and the
    average per-drop sum SE;
``manifest.json``
    configuration, spec, seed, config hash and version.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import batch_samples, worker_count
from .combining import (BEMatrix, be_combine, c_mmse, c_mr, c_obe_closed, c_obe_mc,
                        dg_obe_closed, dg_obe_mc, dl_obe_closed, dl_obe_mc, l_mmse, l_mr)
from .scenario import NetworkConfig, load_config_file, make_drop
from .se import (CSV_COLUMNS, aggregate, ewdp_sinr, local_uatf, lsfd_closed, lsfd_mc,
                 reports_to_csv, standard_bound, uatf_centralized_closed, uatf_centralized_mc)
from . import validation

SCHEMES = {
    "C-MMSE": "centralized", "C-MR": "centralized", "C-OBE": "centralized",
    "L-MMSE": "local", "L-MR": "local", "DG-OBE": "local", "DL-OBE": "local",
}
SCOPE_BOUNDS = {
    "centralized": ("UatF-centralized", "standard-centralized"),
    "local": ("UatF-LSFD", "UatF-EWDP", "UatF-local", "standard-local"),
}
# schemes with a statistics-only (closed-form) evaluation path
CLOSED_SCHEMES = ("C-MR", "C-OBE", "L-MR", "DG-OBE", "DL-OBE")
CLOSED_BOUNDS = ("UatF-centralized", "UatF-LSFD", "UatF-EWDP", "UatF-local")
# largest collective dimension for which the full (MN)^2 C-OBE system is solved
FULL_COBE_MAX_MN = 16
PRESETS = ("fig1-se-vs-N", "fig2-cdf", "fig3-se-vs-K", "fig4-se-vs-M", "fig5-cdf-dist",
           "fig6-sumse-vs-N", "fig7-rician-range", "fig8-scheme-bars",
           "validate-closed-forms", "obe-optimality")
FULL_SCALE = {"M": 20, "K": 20, "N": 4, "tau_p": 1}
GRID_KEYS = ("M", "N", "K", "tau_p", "rician_range", "phase_shifts", "angular_std")
SUMMARY_COLUMNS = CSV_COLUMNS + ("sum_se",)


@dataclass
class ExperimentSpec:
    """What to evaluate: a grid over config fields, drops, realizations and entries.

    ``entries`` lists ``(scheme, bound)`` pairs. ``grid`` maps config fields
    to value lists; the points are their Cartesian product in key order.
    ``closed_cobe`` allows the full closed-form C-OBE system beyond
    ``FULL_COBE_MAX_MN`` antennas.
    """

    preset: str = "custom"
    grid: dict = field(default_factory=dict)
    drops: int = 2
    realizations: int = 2000
    design_realizations: int = None
    entries: list = field(default_factory=list)
    methods: tuple = ("mc",)
    base: dict = field(default_factory=dict)
    closed_cobe: bool = False
    out: str = None

    def __post_init__(self):
        self.entries = [tuple(e) for e in self.entries]
        self.methods = tuple(self.methods)
        self.validate()

    def validate(self):
        if self.preset not in PRESETS and self.preset != "custom":
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        if self.drops < 1 or self.realizations < 1:
            raise ValueError("drops and realizations must be positive")
        if self.design_realizations is not None and self.design_realizations < 1:
            raise ValueError("design_realizations must be positive")
        for key, values in self.grid.items():
            if key not in GRID_KEYS:
                raise ValueError(f"cannot sweep {key!r}; sweepable: {', '.join(GRID_KEYS)}")
            if not values:
                raise ValueError(f"empty sweep for {key!r}")
            if key == "phase_shifts":
                continue
            for v in values:
                # a zero Rician range (pure Rayleigh) is a legitimate sweep point
                ok = v >= 0 if key == "rician_range" else v > 0
                if not ok:
                    raise ValueError(f"sweep value {v!r} for {key!r} must be positive")
        for m in self.methods:
            if m not in ("mc", "closed"):
                raise ValueError(f"unknown method {m!r}")
        for scheme, bound in self.entries:
            check_entry(scheme, bound)

    def points(self):
        keys = list(self.grid)
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            yield dict(zip(keys, combo))

    def to_dict(self):
        d = asdict(self)
        d["entries"] = [list(e) for e in self.entries]
        d["methods"] = list(self.methods)
        d["grid"] = {k: [_jsonable(v) for v in vals] for k, vals in self.grid.items()}
        d["base"] = {k: _jsonable(v) for k, v in self.base.items()}
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "grid" in data:
            data["grid"] = {k: [_from_json(v) for v in vals] for k, vals in data["grid"].items()}
        return cls(**data)


def check_entry(scheme, bound):
    """Reject unknown schemes/bounds and bounds that do not fit the scheme."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; registered: {', '.join(SCHEMES)}")
    scope = SCHEMES[scheme]
    if bound not in SCOPE_BOUNDS["centralized"] + SCOPE_BOUNDS["local"]:
        raise ValueError(f"unknown bound {bound!r}")
    if bound not in SCOPE_BOUNDS[scope]:
        raise ValueError(f"bound {bound!r} does not apply to {scope} scheme {scheme!r}; "
                         f"use one of {', '.join(SCOPE_BOUNDS[scope])}")


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "infinite"
    return v


def _from_json(v):
    return math.inf if isinstance(v, str) and v.lower() in ("inf", "infinite") else v


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

CENTRAL_UATF = [("C-MMSE", "UatF-centralized"), ("C-OBE", "UatF-centralized"),
                ("C-MR", "UatF-centralized")]
CENTRAL_STD = [("C-MMSE", "standard-centralized"), ("C-OBE", "standard-centralized"),
               ("C-OBE", "UatF-centralized"), ("C-MR", "UatF-centralized")]
DISTRIBUTED = [("L-MMSE", "UatF-LSFD"), ("DG-OBE", "UatF-EWDP"), ("DG-OBE", "UatF-LSFD"),
               ("DL-OBE", "UatF-LSFD"), ("L-MR", "UatF-LSFD")]


def preset_spec(name):
    """Desk-scale defaults for each figure preset."""
    base = {"M": 8, "K": 8, "N": 2, "tau_p": 1}
    if name == "fig1-se-vs-N":
        return ExperimentSpec(name, {"N": [1, 2, 3, 4]}, 2, 2000, entries=CENTRAL_UATF, base=base)
    if name == "fig2-cdf":
        return ExperimentSpec(name, {}, 4, 1000, entries=CENTRAL_STD, base={**base, "N": 4})
    if name == "fig3-se-vs-K":
        return ExperimentSpec(name, {"tau_p": [1, 5], "K": [4, 8, 12, 16]}, 2, 1000,
                              entries=CENTRAL_STD, base=base)
    if name == "fig4-se-vs-M":
        return ExperimentSpec(name, {"tau_p": [1, 5], "M": [4, 8, 12, 16]}, 2, 1000,
                              entries=CENTRAL_STD, base=base)
    if name == "fig5-cdf-dist":
        return ExperimentSpec(name, {}, 4, 1000, entries=DISTRIBUTED, base={**base, "N": 4})
    if name == "fig6-sumse-vs-N":
        return ExperimentSpec(name, {"N": [1, 2, 3, 4]}, 2, 1000, entries=DISTRIBUTED,
                              base=base)
    if name == "fig7-rician-range":
        return ExperimentSpec(name, {"rician_range": [0.0, 100.0, 200.0, 400.0, math.inf]},
                              2, 1000, entries=CENTRAL_UATF + DISTRIBUTED, base=base)
    if name == "fig8-scheme-bars":
        return ExperimentSpec(name, {"phase_shifts": [True, False]}, 2, 1000,
                              entries=[("C-MMSE", "standard-centralized"),
                                       ("C-OBE", "standard-centralized"),
                                       ("C-OBE", "UatF-centralized"),
                                       ("C-MR", "UatF-centralized")] + DISTRIBUTED,
                              methods=("mc", "closed"), base=base)
    if name in ("validate-closed-forms", "obe-optimality"):
        return ExperimentSpec(name, {}, 1, 10_000, base={})
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# ---------------------------------------------------------------------------
# evaluation of one (point, drop)
# ---------------------------------------------------------------------------

def _cobe_support(stats, closed_cobe=False):
    """Full system when affordable; AP-diagonal blocks otherwise.

    With random phase shifts the block restriction loses nothing. Without
    them it is a restriction, flagged in the report.
    """
    if stats.M * stats.N <= FULL_COBE_MAX_MN or closed_cobe:
        return "full"
    return "block"


class _DropEvaluator:
    """Builds combiners lazily and shares designs between entries."""

    def __init__(self, stats, spec, drop):
        self.stats = stats
        self.spec = spec
        n_design = spec.design_realizations or spec.realizations
        seed = stats.config.seed
        self.batch = batch_samples(stats, spec.realizations, seed, (drop, 1), workers=1)
        self._design_n = n_design
        self._design_stream = (drop, 2)
        self._design = None
        self._cache = {}

    @property
    def design_batch(self):
        if self._design is None:
            self._design = batch_samples(self.stats, self._design_n, self.stats.config.seed,
                                         self._design_stream, workers=1)
        return self._design

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def mc_W(self, scheme):
        st = self.stats
        if scheme == "C-OBE":
            support = _cobe_support(st)
            if support == "block":
                W = self._block_design().W.to_centralized()
                return BEMatrix("centralized", W.values, "mc_obe"), support
            return self._memo("cobe-full", lambda: c_obe_mc(self.design_batch, st)).W, support
        if scheme == "DG-OBE":
            return self._block_design().W, "block"
        if scheme == "DL-OBE":
            return self._memo("dl", lambda: dl_obe_mc(self.design_batch, st)).W, "local"
        raise KeyError(scheme)

    def _block_design(self):
        # block-support C-OBE and DG-OBE solve the same sample system
        return self._memo("dg", lambda: dg_obe_mc(self.design_batch, self.stats))

    def combiner(self, scheme):
        def build():
            b, st = self.batch, self.stats
            if scheme == "C-MMSE":
                return c_mmse(b, st), None
            if scheme == "L-MMSE":
                return l_mmse(b, st), None
            if scheme == "C-MR":
                return c_mr(b, st), None
            if scheme == "L-MR":
                return l_mr(b, st), None
            W, support = self.mc_W(scheme)
            return be_combine(W, b, scheme), support
        return self._memo(("comb", scheme), build)

    def closed_W(self, scheme):
        st = self.stats
        if scheme == "C-MR":
            return BEMatrix.identity("centralized", st.M, st.N, st.K), None
        if scheme == "L-MR":
            return BEMatrix.identity("local", st.M, st.N, st.K), None
        if scheme == "C-OBE":
            support = _cobe_support(st, self.spec.closed_cobe)
            if support == "full":
                return self._memo("cobe-closed", lambda: c_obe_closed(st)).W, support
            if not st.phase_shifts:
                return None, "skipped"
            # exact under random phases: the optimum is AP-block-diagonal
            W = self._memo("dg-closed", lambda: dg_obe_closed(st)).W.to_centralized()
            return BEMatrix("centralized", W.values, "closed_obe"), "block"
        if scheme == "DG-OBE":
            return self._memo("dg-closed", lambda: dg_obe_closed(st)).W, "block"
        if scheme == "DL-OBE":
            return self._memo("dl-closed", lambda: dl_obe_closed(st)).W, "local"
        raise KeyError(scheme)

    def evaluate(self, scheme, bound, method):
        st = self.stats
        if method == "mc":
            comb, support = self.combiner(scheme)
            b = self.batch
            if bound == "UatF-centralized":
                rep = uatf_centralized_mc(comb, b, st, scheme)
            elif bound == "standard-centralized":
                rep = standard_bound(comb, b, st, "centralized", scheme)
            elif bound == "standard-local":
                rep = standard_bound(comb, b, st, "local", scheme)
            elif bound == "UatF-LSFD":
                rep = lsfd_mc(comb, b, st, "optimal", scheme=scheme)[1]
            elif bound == "UatF-EWDP":
                rep = ewdp_sinr(comb, st, b, scheme)
            else:
                rep = local_uatf(comb, st, b, scheme=scheme)
        else:
            if scheme not in CLOSED_SCHEMES or bound not in CLOSED_BOUNDS:
                return None
            W, support = self.closed_W(scheme)
            if W is None:
                return None
            if bound == "UatF-centralized":
                rep = uatf_centralized_closed(W, st, scheme)
            elif bound in ("UatF-LSFD", "UatF-EWDP"):
                eq, opt = lsfd_closed(W, st, scheme)
                rep = opt if bound == "UatF-LSFD" else eq
            else:
                rep = local_uatf(W, st, scheme=scheme)
        rep.flags = {"support": support} if support else {}
        return rep


def evaluate_drop(config, spec, drop):
    """All entries of ``spec`` for one drop of ``config``; returns SE reports."""
    stats = make_drop(config, drop)
    ev = _DropEvaluator(stats, spec, drop)
    out = []
    for method in spec.methods:
        for scheme, bound in spec.entries:
            rep = ev.evaluate(scheme, bound, method)
            if rep is not None:
                rep.sub_sinr = None
                out.append(rep)
    return out


def _task(args):
    config_dict, spec_dict, drop = args
    return evaluate_drop(NetworkConfig.from_dict(config_dict), ExperimentSpec.from_dict(spec_dict),
                         drop)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def point_config(config, spec, point):
    cfg = config.with_(**spec.base) if spec.base else config
    return cfg.with_(**point) if point else cfg


def config_hash(config, spec):
    blob = json.dumps({"config": config.to_dict(), "spec": spec.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def version_string():
    """Package version plus ``git describe`` output when available."""
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                              text=True, timeout=5, cwd=Path(__file__).parent)
        tag = desc.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+g{tag}" if tag else __version__


def _fmt(v):
    if isinstance(v, float):
        return "infinite" if math.isinf(v) else repr(v)
    return str(v)


def run(spec, config, out=None, workers=None):
    """Evaluate ``spec`` on ``config`` and write CSV files plus the manifest.

    Returns a dict with the written paths, the summary rows and the reports
    (keyed by grid point index). Output bytes depend only on (config, spec).
    """
    if spec.preset in ("validate-closed-forms", "obe-optimality"):
        raise ValueError(f"preset {spec.preset!r} is a suite; use the validate/optimality "
                         "subcommands")
    if not spec.entries:
        raise ValueError("experiment has no (scheme, bound) entries")
    out = Path(out or spec.out or f"results-{spec.preset}")
    workers = worker_count() if workers is None else max(1, int(workers))
    points = list(spec.points()) or [{}]
    cfgs = [point_config(config, spec, pt) for pt in points]
    tasks = [(c.to_dict(), spec.to_dict(), d) for c in cfgs for d in range(spec.drops)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))       # order of submission
    else:
        results = [_task(t) for t in tasks]

    grid_cols = list(spec.grid)
    per_ue = io.StringIO()
    summary_rows = []
    by_point = {}
    first = True
    for i, pt in enumerate(points):
        drops = results[i * spec.drops:(i + 1) * spec.drops]
        by_point[i] = drops
        prefix = {c: _fmt(pt[c]) for c in grid_cols}
        for d, reps in enumerate(drops):
            text = reports_to_csv(reps, {**prefix, "drop": d})
            per_ue.write(text if first else text.split("\n", 1)[1])
            first = False
        keys = [(r.scheme, r.bound, r.method) for r in drops[0]]
        for j, key in enumerate(keys):
            reps = [drop_reps[j] for drop_reps in drops]
            agg = aggregate(reps)
            summary_rows.append({
                **prefix, "ue": "all", "scheme": key[0], "bound": key[1], "method": key[2],
                "sinr": repr(float(np.mean(np.concatenate([r.sinr for r in reps])))),
                "se": repr(agg["avg_se"]),
                "stderr": repr(agg["avg_se_stderr"]) if "avg_se_stderr" in agg else "",
                "samples": sum(r.samples for r in reps),
                "sum_se": repr(agg["sum_se"]),
            })

    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "summary": out / "summary.csv",
             "manifest": out / "manifest.json"}
    paths["results"].write_text(per_ue.getvalue())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=grid_cols + list(SUMMARY_COLUMNS),
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(summary_rows)
    paths["summary"].write_text(buf.getvalue())
    manifest = {
        "preset": spec.preset, "seed": config.seed, "config_hash": config_hash(config, spec),
        "version": version_string(), "config": config.to_dict(), "spec": spec.to_dict(),
        "points": [{k: _jsonable(v) for k, v in pt.items()} for pt in points],
        "files": {k: p.name for k, p in paths.items() if k != "manifest"},
        "supports": sorted({f"{r.scheme}:{r.flags.get('support')}" for reps in results
                            for r in reps if r.flags.get("support")}),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"paths": paths, "summary": summary_rows, "reports": by_point, "points": points}


# ---------------------------------------------------------------------------
# complexity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityEstimate:
    scheme: str
    combining: str           # symbolic order per coherence block
    precompute: str          # symbolic order per drop
    combining_flops: float
    precompute_flops: float


def complexity_report(config, I_r=1000):
    """Orders of the combining and statistics-precomputation costs per scheme."""
    M, N, K, tp = config.M, config.N, config.K, config.tau_p
    q = K // tp
    rows = [
        ("C-MMSE", "M^3 K N^3 I_r + M^2 K N^2 I_r", "M K N^3",
         M**3 * K * N**3 * I_r + M**2 * K * N**2 * I_r, M * K * N**3),
        ("C-OBE", "M^2 K N^2 I_r", "M^6 K N^6 + M^4 K N^4 floor(K/tau_p)",
         M**2 * K * N**2 * I_r, M**6 * K * N**6 + M**4 * K * N**4 * q),
        ("L-MMSE", "M K N^2 I_r + M N^3 I_r", "M K N^3",
         M * K * N**2 * I_r + M * N**3 * I_r, M * K * N**3),
        ("DG-OBE", "M K N^2 I_r", "M^3 K N^6 + M^2 K N^4 floor(K/tau_p)",
         M * K * N**2 * I_r, M**3 * K * N**6 + M**2 * K * N**4 * q),
        ("DL-OBE", "M K N^2 I_r", "M K N^6 + M K N^4 floor(K/tau_p)",
         M * K * N**2 * I_r, M * K * N**6 + M * K * N**4 * q),
        ("LSFD", "-", "M K^2 N^3 + M^3 K", 0, M * K**2 * N**3 + M**3 * K),
    ]
    return [ComplexityEstimate(s, c, p, float(cf), float(pf)) for s, c, p, cf, pf in rows]


def complexity_table(estimates):
    lines = [f"{'scheme':<8} {'combining / block':<32} {'flops':>10}  "
             f"{'precompute / drop':<38} {'flops':>10}"]
    for e in estimates:
        lines.append(f"{e.scheme:<8} {e.combining:<32} {e.combining_flops:>10.3g}  "
                     f"{e.precompute:<38} {e.precompute_flops:>10.3g}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def load_inputs(path):
    """Split a JSON/TOML file into network and experiment settings.

    Either ``[network]``/``[experiment]`` tables or flat keys are accepted;
    flat keys are routed by name.
    """
    if path is None:
        return {}, {}
    data = load_config_file(path)
    net = dict(data.pop("network", {}))
    exp = dict(data.pop("experiment", {}))
    net_keys = set(NetworkConfig.__dataclass_fields__) | {"sigma2_dbm"}
    for key, value in data.items():
        (net if key in net_keys else exp)[key] = value
    return net, exp


def _build(args):
    net, exp = load_inputs(getattr(args, "config", None))
    preset = getattr(args, "preset", None) or exp.pop("preset", None)
    if preset:
        spec = preset_spec(preset)
        exp.pop("preset", None)
        spec = ExperimentSpec.from_dict({**spec.to_dict(), **exp})
    else:
        spec = ExperimentSpec.from_dict(exp)
    overrides = {}
    if getattr(args, "paper_scale", False):
        spec.base = {**spec.base, **FULL_SCALE}
        spec.realizations = 1000
    if getattr(args, "drops", None):
        spec.drops = args.drops
    if getattr(args, "realizations", None):
        spec.realizations = args.realizations
    if getattr(args, "closed_cobe", False):
        spec.closed_cobe = True
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "phase_shifts", None):
        overrides["phase_shifts"] = args.phase_shifts == "on"
        spec.grid.pop("phase_shifts", None)
    config = NetworkConfig.from_dict({**net, **overrides})
    spec.validate()
    return spec, config


def _cmd_run(args):
    spec, config = _build(args)
    if spec.preset == "validate-closed-forms":
        return _cmd_validate(args)
    if spec.preset == "obe-optimality":
        return _cmd_optimality(args)
    res = run(spec, config, args.out)
    for row in res["summary"]:
        print(",".join(str(row[c]) for c in list(spec.grid) + ["scheme", "bound", "method", "se",
                                                               "stderr"]))
    print(f"wrote {res['paths']['summary'].parent}", file=sys.stderr)
    return 0


def validate_suite(count=20, realizations=10_000, seed=0, strict=False):
    """Closed-vs-MC suite; returns ``(checks, verdict, passed)``.

    The default verdict uses band coverage per expression; ``strict``
    additionally fails on any single comparison outside 2 standard errors.
    """
    checks, verdict = validation.closed_form_suite(
        validation.random_scenarios(count, seed), realizations, seed)
    passed = all(v["passed"] for v in verdict.values())
    if strict:
        passed &= all(c.within for c in checks)
    return checks, verdict, passed


def _cmd_validate(args):
    seed = args.seed if getattr(args, "seed", None) is not None else 0
    checks, verdict, passed = validate_suite(getattr(args, "scenarios", 20) or 20,
                                             getattr(args, "realizations", None) or 10_000, seed,
                                             getattr(args, "strict", False))
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.json").write_text(json.dumps(
            {"verdict": verdict, "passed": passed, "checks": [c.as_dict() for c in checks]},
            indent=2, default=_jsonable) + "\n")
    for name, v in verdict.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'} {name}: {v['count']} checks, "
              f"coverage {v['coverage']:.3f}, mean z {v['mean_z']:+.2f}, "
              f"max |z| {v['max_abs_z']:.2f}")
    return 0 if passed else 1


def _cmd_optimality(args):
    net, _ = load_inputs(getattr(args, "config", None))
    cfg = NetworkConfig.from_dict({"M": 4, "N": 2, "K": 4, "tau_p": 2, "area_side": 400.0,
                                   **net})
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    report = validation.optimality_suite(cfg, trials=getattr(args, "trials", 100) or 100)
    text = json.dumps(report, indent=2, sort_keys=True)
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "optimality.json").write_text(text + "\n")
    print(text)
    return 0 if report["passed"] else 1


def _cmd_complexity(args):
    net, _ = load_inputs(args.config)
    cfg = NetworkConfig.from_dict(net)
    if args.paper_scale:
        cfg = cfg.with_(**FULL_SCALE)
    print(f"M={cfg.M} N={cfg.N} K={cfg.K} tau_p={cfg.tau_p} I_r={args.realizations}")
    print(complexity_table(complexity_report(cfg, args.realizations)))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="cfobe", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, realizations_default=None):
        p.add_argument("--config", help="JSON or TOML file with network/experiment settings")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--realizations", type=int, default=realizations_default)

    p = sub.add_parser("run", help="run an experiment preset or a config-defined experiment")
    common(p)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--drops", type=int)
    p.add_argument("--paper-scale", action="store_true",
                   help="M=20, K=20, N=4, tau_p=1, 1000 realizations")
    p.add_argument("--phase-shifts", choices=("on", "off"))
    p.add_argument("--closed-cobe", action="store_true",
                   help="solve the full closed-form C-OBE system even for large M*N")
    p.set_defaults(func=_cmd_run, scenarios=20, strict=False, trials=100)

    p = sub.add_parser("validate", help="closed-form vs Monte-Carlo suite")
    common(p)
    p.add_argument("--scenarios", type=int, default=20)
    p.add_argument("--strict", action="store_true",
                   help="fail on any single comparison outside 2 standard errors")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("complexity", help="complexity orders at a configuration")
    p.add_argument("--config")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--realizations", type=int, default=1000, help="I_r")
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("optimality", help="OBE optimality suite")
    common(p)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=_cmd_optimality)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
