"""Batch orchestration: config files in, CSV/JSON artifacts out.

Runs are reproducible by construction.  A run reads one flat key-value
config, dispatches a subcommand, writes its outputs with atomic renames,
and finishes with a manifest.json recording the config snapshot, the
tolerances in force, and a sha256 digest of every output file.  Numerics
never depend on the worker count; the pool only reorders wall-clock time.

Config lines are `key = value` with dotted lowercase keys; `#` starts a
comment.  Keys by subcommand (defaults in parentheses):

    base.profile    couette | cubic | sine | tabulated
    base.b          sine steepness (1.0)
    base.path       CSV for tabulated profiles
    base.smoothness_order  even-derivative pins to assert (0)
    pert.profile    gaussian | none
    flow.m, flow.gamma     amplitude and width
    eigen.n         interior grid count (2048)
    threshold.n     same, for the m_* bisection
    mfun.lam_lo, mfun.lam_hi, mfun.count   tabulation window (-10, -0.05, 40)
    branch.m_values explicit amplitudes, space separated
    branch.m_max, branch.steps             or a uniform walk
    scan.lams       spectral parameters (-1 -4 -9)
    scan.eps_scan, scan.tiles              strip height and tiling (1e-3, 4)
    bifurcate.eps   amplitudes, space separated
    bifurcate.tau, bifurcate.n_y           norm exponent offset, grid
    evolve.k, evolve.t, evolve.dt, evolve.n_y
    evolve.init     packet (default) | eigen with evolve.c_re, evolve.c_im
    report.runs     completed run directories, space separated

Tolerance overrides live under `tol.`; each subcommand accepts the names
listed in _TOL_NAMES and rejects the rest.
"""
import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .bifurcation import branch_sweep, write_steady_state
from .evolution import eigenmode_initial, evolve_mode, write_time_series
from .profiles import (HypothesisError, PerturbedFlow, base_profile,
                       perturbation_profile, validate)
from .rayleigh import ConvergenceError
from .threshold import (EigenReport, find_mstar, min_eigenvalue,
                        threshold_function_M)
from .tracker import continue_branch, stability_scan

__all__ = [
    "ConfigError",
    "SweepCache",
    "parse_config",
    "serialize_config",
    "run",
    "aggregate_report",
    "main",
]

TOOL_VERSION = "0.1.0"
SUBCOMMANDS = ("validate", "eigen", "threshold", "mfun", "branch", "scan",
               "bifurcate", "evolve", "report")
_TOL_NAMES = {
    "validate": (),
    "eigen": (),
    "threshold": ("eigen",),
    "mfun": ("map",),
    "branch": ("newton",),
    "scan": ("indicator",),
    "bifurcate": ("newton",),
    "evolve": (),
    "report": (),
}


class ConfigError(ValueError):
    """Anything wrong with the config file or the requested run layout."""


# ---------------------------------------------------------------- config

def _parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config(source):
    """Flat dotted-key config from a path or a string of lines."""
    if "\n" in source or "=" in source:
        lines = source.splitlines()
    else:
        try:
            with open(source) as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise ConfigError("cannot read config %s: %s" % (source, exc))
    cfg = {}
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config line %d has no '=': %r" % (i, raw))
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError("config line %d has an empty key" % i)
        if key in cfg:
            raise ConfigError("duplicate config key %r (line %d)" % (key, i))
        cfg[key] = _parse_value(value)
    return cfg


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def serialize_config(cfg):
    return "".join("%s = %s\n" % (k, _format_value(v)) for k, v in cfg.items())


def _need(cfg, key):
    if key not in cfg:
        raise ConfigError("config is missing required key %r" % key)
    return cfg[key]


def _floats(cfg, key):
    raw = _need(cfg, key)
    if isinstance(raw, (int, float)):
        return [float(raw)]
    try:
        return [float(tok) for tok in str(raw).split()]
    except ValueError:
        raise ConfigError("key %r must hold space-separated numbers" % key)


def build_flow(cfg, check=True):
    """(base, pert, flow) from the config's base./pert./flow. keys."""
    name = str(_need(cfg, "base.profile"))
    params = {}
    if name == "sine" and "base.b" in cfg:
        params["b"] = float(cfg["base.b"])
    if name == "tabulated":
        params["path"] = str(_need(cfg, "base.path"))
        params["smoothness_order"] = int(cfg.get("base.smoothness_order", 0))
    try:
        base = base_profile(name, **params)
    except OSError as exc:
        raise ConfigError("base profile table: %s" % exc)
    pert_name = str(cfg.get("pert.profile", "none"))
    pert = None if pert_name == "none" else perturbation_profile(pert_name)
    m = float(cfg.get("flow.m", 0.0))
    gamma = float(cfg.get("flow.gamma", 0.1))
    flow = PerturbedFlow(base, pert, m, gamma, check=check)
    return base, pert, flow


# ---------------------------------------------------------------- cache

class SweepCache:
    """File-backed store of ground-state eigen solves.

    Keys name the flow and the grid; values are whole EigenReports.  A
    hit is bit-identical to recomputation because the solves are pure.
    No eviction: clear() is explicit.
    """

    def __init__(self, root):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def _path(self, key):
        digest = hashlib.sha256(repr(key).encode()).hexdigest()[:32]
        return os.path.join(self.root, digest + ".npz")

    @staticmethod
    def flow_key(cfg, n):
        parts = [cfg.get("base.profile"), cfg.get("base.b"),
                 cfg.get("base.path"), cfg.get("pert.profile", "none"),
                 "%.17g" % float(cfg.get("flow.m", 0.0)),
                 "%.17g" % float(cfg.get("flow.gamma", 0.1)), int(n)]
        return tuple(str(p) for p in parts)

    def get(self, key):
        path = self._path(key)
        if not os.path.exists(path):
            return None
        data = np.load(path, allow_pickle=False)
        return EigenReport(float(data["lam_min"]), data["y"], data["psi"],
                           float(data["residual"]), int(data["grid_n"]),
                           bool(data["extrapolated"]))

    def put(self, key, report):
        path = self._path(key)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".npz")
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, lam_min=report.lam_min, y=report.y, psi=report.psi,
                     residual=report.residual, grid_n=report.grid_n,
                     extrapolated=report.extrapolated)
        os.replace(tmp, path)

    def clear(self):
        for name in os.listdir(self.root):
            if name.endswith(".npz"):
                os.remove(os.path.join(self.root, name))


def resolve_cache_dir(cli_value=None):
    if cli_value:
        return cli_value
    env = os.environ.get("SHEAR_SPECTRA_CACHE")
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "shear_spectra")


# ---------------------------------------------------------------- output

def _num(x):
    if isinstance(x, float):
        return "%.17g" % x
    return x


def _write_csv(path, header, rows):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    with os.fdopen(fd, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_num(x) for x in row])
    os.replace(tmp, path)


def _write_json(path, obj):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _map_ordered(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------- commands

def _run_validate(cfg, out_dir, tol, workers, cache):
    path = os.path.join(out_dir, "validate.json")
    try:
        base, pert, _ = build_flow(cfg, check=False)
    except HypothesisError as exc:
        # profiles that cannot even be constructed still get a report
        _write_json(path, {"all_pass": False,
                           "checks": [{"name": "profile construction",
                                       "passed": False,
                                       "measured": str(exc)}]})
        raise
    report = validate(base, pert, float(cfg.get("flow.m", 0.0)),
                      float(cfg.get("flow.gamma", 0.1)))
    _write_json(path, report.as_dict())
    if not report.all_pass:
        raise HypothesisError("validation failed: %s" % ", ".join(
            name for name, _ in report.failures()))
    return ["validate.json"]


def _run_eigen(cfg, out_dir, tol, workers, cache):
    _, _, flow = build_flow(cfg)
    n = int(cfg.get("eigen.n", 2048))
    key = None
    report = None
    if cache is not None:
        key = SweepCache.flow_key(cfg, n)
        report = cache.get(key)
    if report is None:
        report = min_eigenvalue(flow, n)
        if cache is not None:
            cache.put(key, report)
    _write_json(os.path.join(out_dir, "eigen.json"),
                {"lam_min": report.lam_min, "residual": report.residual,
                 "grid_n": report.grid_n})
    _write_csv(os.path.join(out_dir, "eigen.csv"), ["y", "psi"],
               [(float(a), float(b)) for a, b in zip(report.y, report.psi)])
    return ["eigen.json", "eigen.csv"]


def _run_threshold(cfg, out_dir, tol, workers, cache):
    base, pert, _ = build_flow(cfg)
    if pert is None:
        raise ConfigError("threshold needs pert.profile")
    result = find_mstar(base, pert, float(cfg.get("flow.gamma", 0.1)),
                        n=int(cfg.get("threshold.n", 2048)),
                        tol=float(tol.get("eigen", 1e-8)))
    _write_json(os.path.join(out_dir, "threshold.json"), result.as_dict())
    _write_csv(os.path.join(out_dir, "threshold_trace.csv"),
               ["m", "lam_min"], result.eigen_trace)
    return ["threshold.json", "threshold_trace.csv"]


def _run_mfun(cfg, out_dir, tol, workers, cache):
    base, _, _ = build_flow(cfg, check=False)
    lam_lo = float(cfg.get("mfun.lam_lo", -10.0))
    lam_hi = float(cfg.get("mfun.lam_hi", -0.05))
    count = int(cfg.get("mfun.count", 40))
    if not lam_lo < lam_hi < 0.0:
        raise ConfigError("mfun window must satisfy lam_lo < lam_hi < 0")
    lams = np.linspace(lam_lo, lam_hi, count)
    quad_tol = float(tol.get("map", 1e-12))
    values = _map_ordered(
        lambda lam: threshold_function_M(base, float(lam), tol=quad_tol),
        list(lams), workers)
    _write_csv(os.path.join(out_dir, "mfun.csv"), ["lam", "m_of_lam"],
               list(zip(map(float, lams), values)))
    return ["mfun.csv"]


def _run_branch(cfg, out_dir, tol, workers, cache):
    base, pert, _ = build_flow(cfg)
    if pert is None:
        raise ConfigError("branch needs pert.profile")
    gamma = float(cfg.get("flow.gamma", 0.1))
    kwargs = {"tol": float(tol.get("newton", 1e-10))}
    if "branch.m_values" in cfg:
        kwargs["m_values"] = _floats(cfg, "branch.m_values")
    else:
        if "branch.m_max" in cfg:
            kwargs["m_max"] = float(cfg["branch.m_max"])
        kwargs["steps"] = int(cfg.get("branch.steps", 60))
    if "branch.m_star" in cfg:
        kwargs["m_star"] = float(cfg["branch.m_star"])
    branch = continue_branch(base, pert, gamma, **kwargs)
    _write_csv(os.path.join(out_dir, "branch.csv"),
               ["m", "c_re", "c_im", "newton_residual", "ratio"],
               branch.rows())
    _write_json(os.path.join(out_dir, "branch.json"),
                {"gamma": branch.gamma, "m_star": branch.m_star,
                 "samples": len(branch.samples)})
    return ["branch.csv", "branch.json"]


def _run_scan(cfg, out_dir, tol, workers, cache):
    _, _, flow = build_flow(cfg)
    lams = _floats(cfg, "scan.lams") if "scan.lams" in cfg else [-1.0, -4.0,
                                                                 -9.0]
    count = stability_scan(flow, lam_list=lams,
                           eps_scan=float(cfg.get("scan.eps_scan", 1e-3)),
                           tiles=int(cfg.get("scan.tiles", 4)),
                           tol=float(tol.get("indicator", 1e-10)))
    _write_json(os.path.join(out_dir, "scan.json"), count.as_dict())
    return ["scan.json"]


def _run_bifurcate(cfg, out_dir, tol, workers, cache):
    _, _, flow = build_flow(cfg)
    eps_list = _floats(cfg, "bifurcate.eps")
    sweep = branch_sweep(flow, eps_list,
                         tau=float(cfg.get("bifurcate.tau", 0.5)),
                         n_y=(int(cfg["bifurcate.n_y"])
                              if "bifurcate.n_y" in cfg else None))
    rows = sweep.rows()
    header = list(rows[0].keys())
    _write_csv(os.path.join(out_dir, "bifurcate.csv"), header,
               [[row[k] for k in header] for row in rows])
    outputs = ["bifurcate.csv"]
    if bool(cfg.get("bifurcate.save_state", False)):
        write_steady_state(sweep.states[-1],
                           os.path.join(out_dir, "steady_state"))
        outputs += ["steady_state.csv", "steady_state.json"]
    _write_json(os.path.join(out_dir, "bifurcate.json"),
                {"k0_sq": sweep.k0_sq, "k0_sq_grid": sweep.k0_sq_grid,
                 "eps": eps_list})
    outputs.append("bifurcate.json")
    return outputs


def _run_evolve(cfg, out_dir, tol, workers, cache):
    _, _, flow = build_flow(cfg)
    k = int(cfg.get("evolve.k", 1))
    horizon = float(_need(cfg, "evolve.t"))
    n_y = int(cfg.get("evolve.n_y", 1025))
    init = str(cfg.get("evolve.init", "packet"))
    if init == "eigen":
        c = complex(float(_need(cfg, "evolve.c_re")),
                    float(_need(cfg, "evolve.c_im")))
        omega0 = eigenmode_initial(flow, c, k, n_y)[0]
    elif init == "packet":
        omega0 = lambda y: (1.0 - y ** 2) * np.exp(-2.0 * y ** 2)
    else:
        raise ConfigError("evolve.init must be packet or eigen")
    dt = float(cfg["evolve.dt"]) if "evolve.dt" in cfg else None
    series = evolve_mode(flow, k, omega0, horizon, dt=dt, n_y=n_y)
    write_time_series(series, os.path.join(out_dir, "evolve.csv"))
    _write_json(os.path.join(out_dir, "evolve.json"), series.summary())
    return ["evolve.csv", "evolve.json"]


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def aggregate_report(run_dirs):
    """Collate completed runs into one summary dict.

    Every directory must hold a manifest.json; threshold, eigen, branch
    and evolve artifacts become table rows, and each evolve run is joined
    against the branch rows at the nearest amplitude to report the
    eigenvalue-vs-observed growth deviation.
    """
    if not run_dirs:
        raise ConfigError("report needs at least one completed run")
    runs = []
    branches = []
    for d in run_dirs:
        mpath = os.path.join(d, "manifest.json")
        if not os.path.exists(mpath):
            raise ConfigError("no manifest.json under %s" % d)
        manifest = _load_json(mpath)
        row = {"dir": d, "subcommand": manifest["subcommand"]}
        sub = manifest["subcommand"]
        if sub == "threshold":
            data = _load_json(os.path.join(d, "threshold.json"))
            row.update(gamma=data["gamma"], m_star=data["m_star"],
                       residual=data["residual"])
        elif sub == "eigen":
            data = _load_json(os.path.join(d, "eigen.json"))
            row.update(lam_min=data["lam_min"], residual=data["residual"])
        elif sub == "branch":
            with open(os.path.join(d, "branch.csv"), newline="") as fh:
                rows = list(csv.DictReader(fh))
            samples = [(float(r["m"]), float(r["c_im"])) for r in rows]
            branches.append({"config": manifest["config"],
                             "samples": samples})
            row.update(samples=len(samples))
        elif sub == "evolve":
            data = _load_json(os.path.join(d, "evolve.json"))
            row.update(k=data["k"], fitted_rate=data["fitted_rate"],
                       m=manifest["config"].get("flow.m"))
        runs.append(row)
    comparisons = []
    for row in runs:
        if row["subcommand"] != "evolve" or row.get("m") is None \
                or row.get("fitted_rate") is None:
            continue
        for br in branches:
            m_run = float(row["m"])
            m_near, c_im = min(br["samples"],
                               key=lambda s: abs(s[0] - m_run))
            predicted = row["k"] * c_im
            if predicted == 0.0:
                continue
            comparisons.append({
                "dir": row["dir"], "m": m_run, "m_branch": m_near,
                "observed_rate": row["fitted_rate"],
                "predicted_rate": predicted,
                "deviation_pct": 100.0 * abs(row["fitted_rate"] - predicted)
                / abs(predicted)})
    return {"runs": runs, "growth_comparison": comparisons}


def _run_report(cfg, out_dir, tol, workers, cache):
    dirs = str(_need(cfg, "report.runs")).split()
    summary = aggregate_report(dirs)
    _write_json(os.path.join(out_dir, "report.json"), summary)
    lines = ["subcommand        dir                        headline",
             "-" * 72]
    for row in summary["runs"]:
        extras = {k: v for k, v in row.items()
                  if k not in ("dir", "subcommand")}
        headline = ", ".join("%s=%s" % (k, _num(v) if isinstance(v, float)
                                        else v)
                             for k, v in sorted(extras.items()))
        lines.append("%-17s %-26s %s" % (row["subcommand"], row["dir"],
                                         headline))
    for cmp_row in summary["growth_comparison"]:
        lines.append("growth check      %-26s observed %.6g vs predicted "
                     "%.6g (%.2f%%)" % (cmp_row["dir"],
                                        cmp_row["observed_rate"],
                                        cmp_row["predicted_rate"],
                                        cmp_row["deviation_pct"]))
    print("\n".join(lines))
    return ["report.json"]


_RUNNERS = {
    "validate": _run_validate,
    "eigen": _run_eigen,
    "threshold": _run_threshold,
    "mfun": _run_mfun,
    "branch": _run_branch,
    "scan": _run_scan,
    "bifurcate": _run_bifurcate,
    "evolve": _run_evolve,
    "report": _run_report,
}


def run(subcommand, config_path, out_dir, workers=1, tol=None,
        cache_dir=None):
    """Execute one subcommand; returns the process exit code.

    0 on success, 2 for config problems, 3 for hypothesis violations
    (including a failing validate), 4 when a solver does not converge.
    Outputs and manifest.json land in out_dir.
    """
    import sys
    tol = dict(tol or {})
    try:
        if subcommand not in _RUNNERS:
            raise ConfigError("unknown subcommand %r" % subcommand)
        unknown = set(tol) - set(_TOL_NAMES[subcommand])
        if unknown:
            raise ConfigError("subcommand %s takes no tol.%s"
                              % (subcommand, sorted(unknown)[0]))
        cfg = parse_config(config_path)
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigError("out dir: %s" % exc)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    cache = SweepCache(resolve_cache_dir(cache_dir)) \
        if subcommand == "eigen" else None
    started = datetime.datetime.now(datetime.timezone.utc)
    code = 0
    try:
        outputs = _RUNNERS[subcommand](cfg, out_dir, tol, int(workers),
                                       cache)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except HypothesisError as exc:
        print("hypothesis violation: %s" % exc, file=sys.stderr)
        report_path = os.path.join(out_dir, "validate.json")
        if not (subcommand == "validate" and os.path.exists(report_path)):
            return 3
        outputs = ["validate.json"]
        code = 3
    except ConvergenceError as exc:
        print("did not converge: %s" % exc, file=sys.stderr)
        return 4
    except ValueError as exc:
        # bad parameter values surfacing from the numerics (dt refusals,
        # guard rails) are config problems from the caller's side
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    manifest = {
        "subcommand": subcommand,
        "version": TOOL_VERSION,
        "config": cfg,
        "tolerances": tol,
        "workers": int(workers),
        "created_utc": started.isoformat(),
        "outputs": {name: _digest(os.path.join(out_dir, name))
                    for name in outputs},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return code


def main(argv=None):
    """Entry point for python -m shear_spectra."""
    import sys
    argv = list(sys.argv[1:] if argv is None else argv)
    tol = {}
    rest = []
    for arg in argv:
        if arg.startswith("--tol."):
            body = arg[len("--tol."):]
            if "=" not in body:
                print("config error: tolerance flags use --tol.<name>=<v>",
                      file=sys.stderr)
                return 2
            name, _, value = body.partition("=")
            try:
                tol[name] = float(value)
            except ValueError:
                print("config error: tolerance %r is not a number" % value,
                      file=sys.stderr)
                return 2
        else:
            rest.append(arg)
    parser = argparse.ArgumentParser(
        prog="python -m shear_spectra",
        description="spectral workbench for perturbed monotone shear flows")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--cache-dir", default=None)
    args = parser.parse_args(rest)
    out_dir = args.out if args.out else args.subcommand + "_out"
    return run(args.subcommand, args.config, out_dir, workers=args.workers,
               tol=tol, cache_dir=args.cache_dir)
