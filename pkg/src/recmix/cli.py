"""Command line front end.

    recmix estimate   [--config cfg.json] [--scenario BN | --data file.csv] ...
    recmix reproduce  BN|GP|IN [--T 100] ...
    recmix stress     [--n 50000] [--npb] ...
    recmix oracle-check

Every output file starts with ``#`` metadata lines (config hash, seed, grid
size, version).  Worker processes for replicates come from
``RECMIX_WORKERS``; everything else is configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._loops import BACKEND
from .evalx import MetricsReport, bias_spread, kl_divergence, l1_distance, xscale_for
from .kernels import model_from_config
from .measure import mix_atom_mass
from .npb import DPConfig, npb_estimate
from .npml import npml_fit
from .recursion import WeightSchedule, iterate_average, pare_run, re_run
from .simgen import gen, ordered_counts, read_data_csv, scenario

log = logging.getLogger("recmix")

ESTIMATORS = ("RE", "PARE", "NPML", "NPB", "ITAVG")
STUDY_ESTIMATORS = {
    "BN": ["RE", "PARE", "NPML", "NPB"],
    "GP": ["RE", "PARE", "NPML", "NPB"],
    "IN": ["PARE", "NPB"],
}
X_CURVE_STRIDE = 10


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    scenario: str = "BN"
    n: int = 200
    T: int = 100
    estimators: list = dataclasses.field(default_factory=lambda: ["RE", "PARE"])
    alpha: float = 1.0
    num_perms: int = 100
    R: int = 10_000
    c: float = 1.0
    seed: int = 0
    m: int | None = None
    output: str = "out"
    sigma: float | None = None
    permute_each_pass: bool = True
    data: str | None = None
    kernel: str | None = None
    theta_lo: float | None = None
    theta_hi: float | None = None
    atoms: list | None = None
    npml_tol: float = 1e-8
    npml_max_iter: int = 100_000
    diagnostics: bool = False

    def validate(self):
        problems = []
        if not self.estimators:
            problems.append("estimators: list is empty")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            problems.append(f"estimators: unknown {bad}; choose from {list(ESTIMATORS)}")
        if self.scenario.upper() not in ("BN", "GP", "IN"):
            problems.append(f"scenario: {self.scenario!r} not in BN/GP/IN")
        for name in ("n", "T", "num_perms", "R", "npml_max_iter"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name}: must be >= 1")
        if self.m is not None and self.m < 2:
            problems.append("m: must be >= 2")
        if not 0.5 < self.alpha <= 1.0:
            problems.append("alpha: must lie in (0.5, 1]")
        if not self.c > 0:
            problems.append("c: must be positive")
        if problems:
            raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
        return self

    def canonical(self):
        # where results go does not change them
        d = dataclasses.asdict(self)
        d.pop("output")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def load_config(path=None, overrides=None):
    raw = {}
    if path:
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {unknown}")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if isinstance(raw.get("estimators"), str):
        raw["estimators"] = [e.strip() for e in raw["estimators"].split(",") if e.strip()]
    if "estimators" in raw:
        raw["estimators"] = [str(e).upper() for e in raw["estimators"]]
    try:
        cfg = ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# ----------------------------------------------------------------- setup

def build_problem(cfg):
    sc = scenario(cfg.scenario, n=cfg.n, sigma=cfg.sigma, m=cfg.m, theta_lo=cfg.theta_lo,
                  theta_hi=cfg.theta_hi, atoms=cfg.atoms)
    measure = sc.measure()
    model = sc.model()
    if cfg.kernel:
        model = model_from_config({"kernel": cfg.kernel, "sigma": sc.sigma})
    return sc, measure, model, sc.f0(measure)


def metadata(cfg, extra=()):
    sc = scenario(cfg.scenario, m=cfg.m)
    lines = [
        f"recmix {__version__} backend={BACKEND}",
        f"config_sha256={cfg.digest()} seed={cfg.seed} grid_m={sc.m if cfg.m is None else cfg.m}",
        f"config={cfg.canonical()}",
        "gamma_parametrization=shape2_rate0.4 truncnormal_scale=variance4 "
        f"npb_permute_each_pass={cfg.permute_each_pass} pare_permutations=iid_with_replacement",
    ]
    return lines + list(extra)


def derived_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def run_estimators(cfg, data, measure, model, f0, seed, ordered_data=None):
    """Fit each configured estimator on one dataset.

    Returns ``{name: (density or None, info)}``; failures are captured in
    ``info["status"]`` so a study keeps going.
    """
    schedule = WeightSchedule(cfg.alpha)
    out = {}
    for name in cfg.estimators:
        info = {"status": "ok"}
        t0 = time.perf_counter()
        try:
            if name == "RE":
                seq = data if ordered_data is None else ordered_data
                est, _ = re_run(f0, seq, schedule, model)
            elif name == "ITAVG":
                _, trace = re_run(f0, data, schedule, model, keep_iterates=True)
                est = iterate_average(trace, None)
            elif name == "PARE":
                est = pare_run(f0, data, schedule, model, cfg.num_perms, derived_seed(seed, 1))
            elif name == "NPML":
                res = npml_fit(data, measure, model, cfg.npml_max_iter, cfg.npml_tol)
                est = res.density
                info.update(iterations=res.iterations, log_likelihood=res.log_likelihood,
                            converged=res.converged)
            elif name == "NPB":
                res = npb_estimate(data, DPConfig(f0, cfg.c), model, cfg.R, derived_seed(seed, 2),
                                   cfg.permute_each_pass)
                est = res.density
                info.update(ess=res.ess, log_marginal=res.log_marginal, npb=res)
            info["wall_time_seconds"] = time.perf_counter() - t0
        except Exception as exc:  # recorded per replicate
            log.warning("%s failed: %s", name, exc)
            est = None
            info["status"] = f"error:{type(exc).__name__}:{exc}".replace(",", ";")
            info["wall_time_seconds"] = time.perf_counter() - t0
        out[name] = (est, info)
    return out


def score(report, name, replicate, est, info, truth_f, xs, p_true):
    if est is None:
        report.add(name, replicate, info["status"], wall_time_seconds=info["wall_time_seconds"])
        return None
    p_hat = xs.mixture(est)
    pi_hat = None
    if truth_f.measure.atoms.size:
        pi_hat = mix_atom_mass(est, float(truth_f.measure.atoms[0]))
    row = report.add(
        name, replicate, "ok",
        L1_theta=l1_distance(truth_f, est) if truth_f is not None else None,
        L1_x=l1_distance(p_true, p_hat),
        KL_x=kl_divergence(p_true, p_hat),
        pi_hat=pi_hat, ess=info.get("ess"),
        wall_time_seconds=info["wall_time_seconds"],
    )
    if not math.isfinite(row["KL_x"]):
        row["status"] = "kl_infinite"
    return p_hat


# ----------------------------------------------------------------- writers

def write_density_csv(path, header, curves):
    """``curves``: iterable of (estimator, replicate, scale, density, stride)."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("estimator,replicate,scale,point,value,kind\n")
        for name, rep, scale, d, stride in curves:
            kinds = np.where(d.measure.is_atom, "atom", "node")
            idx = np.arange(d.measure.size)
            if stride > 1:
                idx = idx[(idx % stride == 0) | d.measure.is_atom]
            for j in idx:
                fh.write(f"{name},{rep},{scale},{float(d.measure.support[j])!r},"
                         f"{float(d.values[j])!r},{kinds[j]}\n")


def write_metrics(outdir, report, header):
    with open(outdir / "metrics.csv", "w", newline="") as fh:
        report.write_csv(fh, include_timing=False, header_lines=header)
    with open(outdir / "timing.csv", "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("estimator,replicate,status,wall_time_seconds\n")
        for r in report.rows:
            fh.write(f"{r['estimator']},{r['replicate']},{r['status']},{r.get('wall_time_seconds')!r}\n")


GNUPLOT = """\
# gnuplot script: truth (black) and replicate estimates (gray)
set datafile separator ","
set datafile commentschars "#"
set key off
set terminal pngcairo size 1400,700
do for [est in "{estimators}"] {{
  do for [scale in "theta x"] {{
    set output sprintf("%s_%s.png", est, scale)
    set title sprintf("%s (%s scale)", est, scale)
    plot "curves.csv" using ((strcol(1) eq est && strcol(3) eq scale && strcol(6) eq "node") ? $4 : NaN):5 \\
           with points pt 7 ps 0.2 lc rgb "#aaaaaa", \\
         "curves.csv" using ((strcol(1) eq "truth" && strcol(3) eq scale && strcol(6) eq "node") ? $4 : NaN):5 \\
           with lines lw 2 lc rgb "black"
  }}
}}
"""


# ----------------------------------------------------------------- commands

def cmd_estimate(cfg, out=None):
    out = out or sys.stdout
    sc, measure, model, f0 = build_problem(cfg)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    truth_f = None
    if cfg.data:
        data = model.check_observations(read_data_csv(cfg.data))
    else:
        sim = gen(sc, cfg.seed, measure)
        data, truth_f = sim.xs, sim.truth_f
    ordered = ordered_counts(data) if model.observation_kind == "count" else None
    results = run_estimators(cfg, data, measure, model, f0, cfg.seed, ordered)
    xs = xscale_for(model, measure)
    header = metadata(cfg, [f"n={data.size} source={'file:' + cfg.data if cfg.data else 'scenario'}"])
    report = MetricsReport()
    curves = []
    p_true = xs.mixture(truth_f) if truth_f is not None else None
    for name, (est, info) in results.items():
        if est is None:
            report.add(name, 0, info["status"], wall_time_seconds=info["wall_time_seconds"])
            continue
        p_hat = xs.mixture(est)
        curves += [(name, 0, "theta", est, 1), (name, 0, "x", p_hat, X_CURVE_STRIDE)]
        row = {
            "ess": info.get("ess"),
            "pi_hat": mix_atom_mass(est, float(measure.atoms[0])) if measure.atoms.size else None,
            "wall_time_seconds": info["wall_time_seconds"],
        }
        if truth_f is not None:
            row.update(L1_theta=l1_distance(truth_f, est), L1_x=l1_distance(p_true, p_hat),
                       KL_x=kl_divergence(p_true, p_hat))
        report.add(name, 0, "ok", **row)
        if cfg.diagnostics and "npb" in info:
            info["npb"].diagnostics_csv(outdir / "npb_passes.csv")
    if truth_f is not None:
        curves = [("truth", 0, "theta", truth_f, 1), ("truth", 0, "x", p_true, X_CURVE_STRIDE)] + curves
    write_density_csv(outdir / "density.csv", header, curves)
    write_metrics(outdir, report, header)
    for r in report.rows:
        print(f"{r['estimator']:6s} status={r['status']} "
              + " ".join(f"{k}={r[k]:.4g}" for k in ("L1_x", "KL_x", "pi_hat", "ess",
                                                     "wall_time_seconds")
                         if isinstance(r.get(k), float)), file=out)
    return all(r["status"] == "ok" for r in report.rows)


def _replicate(args):
    cfg, t = args
    sc, measure, model, f0 = build_problem(cfg)
    seed = derived_seed(cfg.seed, t)
    sim = gen(sc, seed, measure)
    data = sim.xs
    if model.observation_kind == "count":
        # count data arrive stored as a frequency table: all 0s, then 1s, ...
        data = ordered_counts(data)
    results = run_estimators(cfg, data, measure, model, f0, seed)
    for _, info in results.values():
        info.pop("npb", None)
    return t, results


def cmd_reproduce(cfg, out=None):
    out = out or sys.stdout
    sc, measure, model, f0 = build_problem(cfg)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    truth_f = sc.truth(measure)
    xs = xscale_for(model, measure)
    p_true = xs.mixture(truth_f)
    header = metadata(cfg, [f"study={sc.name} T={cfg.T} n={cfg.n}"])

    workers = int(os.environ.get("RECMIX_WORKERS", "1") or 1)
    jobs = [(cfg, t) for t in range(cfg.T)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]

    report = MetricsReport()
    curves = [("truth", "", "theta", truth_f, 1), ("truth", "", "x", p_true, X_CURVE_STRIDE)]
    per_est = {name: [] for name in cfg.estimators}
    for t, res in sorted(results, key=lambda r: r[0]):
        for name in cfg.estimators:
            est, info = res[name]
            p_hat = score(report, name, t, est, info, truth_f, xs, p_true)
            if p_hat is not None:
                per_est[name].append(p_hat)
                curves += [(name, t, "theta", est, 1), (name, t, "x", p_hat, X_CURVE_STRIDE)]

    hidden = {"RE"} if sc.name == "GP" else set()
    for name, ests in per_est.items():
        if not ests:
            continue
        bias, spread = bias_spread(ests, p_true)
        note = "excluded from summary: sorted count data" if name in hidden else ""
        report.add_aggregate(name, bias, spread, L1_x=report.mean(name, "L1_x"),
                             pi_hat=report.mean(name, "pi_hat") if measure.atoms.size else None,
                             ess=report.mean(name, "ess") if name == "NPB" else None,
                             wall_time_seconds=report.mean(name, "wall_time_seconds"), note=note)

    write_metrics(outdir, report, header)
    write_density_csv(outdir / "curves.csv", header, curves)
    with open(outdir / "summary.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("estimator,mean_L1_x,bias,spread,bias_plus_spread,mean_pi_hat,mean_ess,"
                 "mean_wall_time_seconds,note\n")
        for a in report.aggregates:
            fh.write(",".join(str(v) for v in (
                a["estimator"], a["L1_x"], a["bias"], a["spread"], a["bias"] + a["spread"],
                "" if a.get("pi_hat") is None else a["pi_hat"],
                "" if a.get("ess") is None else a["ess"], a["wall_time_seconds"], a["note"])) + "\n")
    (outdir / "plot.gp").write_text(GNUPLOT.format(estimators=" ".join(cfg.estimators)))

    for a in report.aggregates:
        extra = f" pi_hat={a['pi_hat']:.4f}" if a.get("pi_hat") is not None else ""
        extra += f" ess={a['ess']:.1f}" if a.get("ess") is not None else ""
        tag = " [hidden]" if a["note"] else ""
        print(f"{a['estimator']:6s} L1_x={a['L1_x']:.4f} bias={a['bias']:.4f} "
              f"spread={a['spread']:.4f} time={a['wall_time_seconds']:.4f}s{extra}{tag}", file=out)
    return all(r["status"] == "ok" for r in report.rows)


def cmd_stress(cfg, use_npb=False, out=None):
    out = out or sys.stdout
    sc, measure, model, f0 = build_problem(cfg)
    sim = gen(sc, cfg.seed, measure)
    ests = ["PARE"] + (["NPB"] if use_npb else [])
    cfg = dataclasses.replace(cfg, estimators=ests)
    results = run_estimators(cfg, sim.xs, measure, model, f0, cfg.seed)
    xs = xscale_for(model, measure)
    p_true = xs.mixture(sim.truth_f)
    report = MetricsReport()
    for name, (est, info) in results.items():
        score(report, name, 0, est, info, sim.truth_f, xs, p_true)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    write_metrics(outdir, report, metadata(cfg, [f"stress n={cfg.n}"]))
    for r in report.rows:
        print(f"{r['estimator']:6s} status={r['status']} "
              + " ".join(f"{k}={r[k]:.4g}" for k in ("pi_hat", "L1_theta", "L1_x", "ess",
                                                     "wall_time_seconds")
                         if isinstance(r.get(k), float)), file=out)
    return all(r["status"] == "ok" for r in report.rows)


def cmd_oracle_check(out=None):
    out = out or sys.stdout
    from .oracles import run_all
    ok = True
    for name, passed, detail in run_all():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}", file=out)
    return ok


# ----------------------------------------------------------------- argparse

def _add_common(p):
    p.add_argument("--config", help="JSON config file (flat ExperimentConfig schema)")
    p.add_argument("--scenario", choices=["BN", "GP", "IN"])
    p.add_argument("--n", type=int)
    p.add_argument("--estimators", help="comma list from RE,PARE,NPML,NPB,ITAVG")
    p.add_argument("--alpha", type=float)
    p.add_argument("--num-perms", dest="num_perms", type=int)
    p.add_argument("--R", dest="R", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--output", "-o")
    p.add_argument("--no-permute-passes", dest="permute_each_pass", action="store_const",
                   const=False)
    p.add_argument("--diagnostics", action="store_const", const=True)


def _file_sets(path, key):
    return bool(path) and key in json.loads(Path(path).read_text())


def main(argv=None):
    parser = argparse.ArgumentParser(prog="recmix", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run estimators on one dataset")
    _add_common(p)
    p.add_argument("--data", help="CSV of observations (column x)")

    p = sub.add_parser("reproduce", help="replicate a simulation study")
    p.add_argument("study", choices=["BN", "GP", "IN"])
    _add_common(p)
    p.add_argument("--T", dest="T", type=int)

    p = sub.add_parser("stress", help="large-n (IN) run")
    _add_common(p)
    p.add_argument("--npb", action="store_true", help="also run the importance sampler")

    sub.add_parser("oracle-check", help="run enumeration and brute-force oracles")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "oracle-check":
        return 0 if cmd_oracle_check() else 1

    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose", "study", "npb")}
    try:
        if args.command == "reproduce":
            overrides["scenario"] = args.study
            cfg = load_config(args.config, overrides)
            if overrides.get("estimators") is None and not _file_sets(args.config, "estimators"):
                cfg = dataclasses.replace(cfg, estimators=STUDY_ESTIMATORS[args.study]).validate()
            ok = cmd_reproduce(cfg)
        elif args.command == "stress":
            overrides["scenario"] = overrides.get("scenario") or "IN"
            if overrides.get("n") is None:
                overrides["n"] = 50_000
            cfg = load_config(args.config, overrides)
            ok = cmd_stress(cfg, use_npb=args.npb)
        else:
            cfg = load_config(args.config, overrides)
            ok = cmd_estimate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
