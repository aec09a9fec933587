"""Command-line front end: simulation, fitting, sweeps, figure recipes.

Every run writes its artifacts plus a ``manifest.json`` recording the
subcommand, the fully resolved configuration, the seed, the package
version, wall-clock/step counts, and a SHA-256 digest per output file.
All pipelines are deterministic, so identical config + seed reproduces
bit-identical CSV/JSON artifacts.

Exit codes: 0 success, 2 usage error, 3 invalid configuration, 4 solver
failure.  Failures print a machine-readable JSON error to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from . import __version__, correlations, dicke, fitting, meanfield
from .params import (
    DEFAULTS,
    TWO_PI,
    CavityParams,
    EmitterEnsembleSpec,
    FrequencyConvention,
    GaussianDistributionSpec,
    RateSet,
    SubEnsemble,
    discretize_gaussian,
    load_config,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4

FIG_PANELS = ("fig4a", "fig4b", "fig4c", "fig4d", "fig4e", "fig4f")


class ConfigError(ValueError):
    pass


def _workers():
    """Worker-pool size for sweep fan-out (CAVEMIT_WORKERS, default 1)."""
    try:
        return max(1, int(os.environ.get("CAVEMIT_WORKERS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = _workers()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Artifacts and manifest
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    version: str = __version__
    wall_seconds: float = 0.0
    step_count: int = 0
    outputs: list = field(default_factory=list)

    def add_output(self, path):
        self.outputs.append(
            {"path": os.path.basename(path), "sha256": _sha256(path)}
        )

    def write(self, outdir):
        path = os.path.join(outdir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


class ArtifactWriter:
    """Collects output files and step counts for the manifest."""

    def __init__(self, outdir, manifest):
        self.outdir = outdir
        self.manifest = manifest
        os.makedirs(outdir, exist_ok=True)

    def csv(self, name, header, rows):
        path = os.path.join(self.outdir, name)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        self.manifest.add_output(path)
        return path

    def json(self, name, payload):
        path = os.path.join(self.outdir, name)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.manifest.add_output(path)
        return path

    def count(self, steps):
        self.manifest.step_count += int(steps)


# ---------------------------------------------------------------------------
# Shared parameter plumbing
# ---------------------------------------------------------------------------


def _eta_grid(spec_dict, gamma):
    grid = spec_dict.get("eta_over_gamma_grid", {})
    start = float(grid.get("start", 0.05))
    stop = float(grid.get("stop", 2.0))
    points = int(grid.get("points", 12))
    if not (0 < start < stop and points >= 2):
        raise ConfigError("eta grid requires 0 < start < stop and points >= 2")
    return gamma * np.geomspace(start, stop, points)


def _rates(cfg, eta):
    return RateSet(
        gamma=cfg.get("gamma_per_ns", DEFAULTS.gamma),
        chi=cfg.get("chi_per_ns", 0.0),
        eta=eta,
    )


def _recipe(panel):
    with resources.files("cavemit.recipes").joinpath(f"{panel}.json").open() as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Pipelines (shared by explicit subcommands and reproduce recipes)
# ---------------------------------------------------------------------------


def run_dicke_population_map(cfg, writer):
    n = int(cfg["n"])
    gamma_c = float(cfg.get("gamma_collective_per_ns", DEFAULTS.gamma_collective))
    gamma = cfg.get("gamma_per_ns", DEFAULTS.gamma)
    rates = _rates(cfg, float(cfg.get("eta_over_gamma", 2.0)) * gamma)
    liouv = dicke.build_liouvillian(n, gamma_c, rates)
    ss = dicke.steady_state(liouv)
    pops = ss.populations()
    rows = [
        (j, m, p) for (j, m), p in zip(ss.basis.levels, pops)
    ]
    writer.csv("populations.csv", ("J", "M", "population"), rows)
    writer.json(
        "summary.json",
        {
            "n": n,
            "radiation_rate_per_ns": dicke.radiation_rate(ss, gamma_c),
            "eta_over_gamma": rates.eta / rates.gamma,
        },
    )
    writer.count(len(rows))


def run_dicke_pump_sweep(cfg, writer):
    gamma_c = float(cfg.get("gamma_collective_per_ns", DEFAULTS.gamma_collective))
    gamma = cfg.get("gamma_per_ns", DEFAULTS.gamma)
    eta_grid = _eta_grid(cfg, gamma)
    n_list = [int(n) for n in cfg["n_list"]]

    def one(n):
        rates = _rates(cfg, eta_grid[0])
        return dicke.pump_scaling_curve(n, gamma_c, rates, eta_grid)

    rows = []
    for n, (eta_over_gamma, i_rad, slope) in zip(n_list, _map(one, n_list)):
        for e, i, s in zip(eta_over_gamma, i_rad, slope):
            rows.append((n, e, i, s))
    writer.csv("pump_sweep.csv", ("N", "eta_over_gamma", "I_rad", "local_slope"), rows)
    writer.count(len(rows))


def _g2_trace(cfg, n):
    gamma_c = float(cfg.get("gamma_collective_per_ns", DEFAULTS.gamma_collective))
    gamma = cfg.get("gamma_per_ns", DEFAULTS.gamma)
    rates = _rates(cfg, float(cfg.get("eta_over_gamma", 2.0)) * gamma)
    grid_cfg = cfg.get("tau_grid", {})
    tau_grid = correlations.default_tau_grid(
        t_min=float(grid_cfg.get("t_min", 0.01)),
        t_max=float(grid_cfg.get("t_max", 100.0)),
        n=int(grid_cfg.get("n", 241)),
    )
    liouv = dicke.build_liouvillian(n, gamma_c, rates)
    ss = dicke.steady_state(liouv)
    return correlations.g2_dicke(liouv, ss, tau_grid)


def run_g2_traces(cfg, writer):
    n_list = [int(n) for n in cfg["n_list"]]
    traces = _map(lambda n: _g2_trace(cfg, n), n_list)
    rows = []
    for n, trace in zip(n_list, traces):
        for t, v in zip(trace.tau_grid, trace.values):
            rows.append((n, t, v))
    writer.csv("g2_traces.csv", ("N", "tau_ns", "g2"), rows)
    writer.count(len(rows))


def run_g2_features(cfg, writer):
    n_list = [int(n) for n in cfg["n_list"]]
    traces = _map(lambda n: _g2_trace(cfg, n), n_list)
    rows = []
    for n, trace in zip(n_list, traces):
        feats = correlations.extract_features(trace)
        rows.append(
            (
                n,
                feats.peak_value if feats.peak_value is not None else float("nan"),
                feats.dip_value if feats.dip_value is not None else float("nan"),
                feats.decay_time if feats.decay_time is not None else float("nan"),
                feats.rise_time if feats.rise_time is not None else float("nan"),
            )
        )
    writer.csv(
        "g2_features.csv",
        ("N", "peak_value", "dip_value", "decay_time_ns", "rise_time_ns"),
        rows,
    )
    writer.count(len(rows))


def run_meanfield_widths(cfg, writer):
    gamma = cfg.get("gamma_per_ns", DEFAULTS.gamma)
    kappa = TWO_PI * cfg.get("kappa_ghz_fwhm", 1.0)
    g = float(cfg.get("g_rad_per_ns", DEFAULTS.g_ensemble))
    rates = _rates(cfg, 0.0)
    eta_grid = _eta_grid(cfg, gamma)
    w_list = [float(w) * kappa for w in cfg["w_over_kappa"]]
    rows = meanfield.inhomogeneity_sweep(
        int(cfg.get("n_emitters", 500)), w_list, eta_grid, g, rates, kappa=kappa
    )
    writer.csv(
        "radiation_vs_pump.csv",
        ("w_over_kappa", "delta_over_kappa", "eta_over_gamma", "I_rad", "max_slope",
         "weighted"),
        [(*row, 0) for row in rows],
    )
    writer.count(len(rows))


def run_meanfield_detuning(cfg, writer):
    gamma = cfg.get("gamma_per_ns", DEFAULTS.gamma)
    kappa = TWO_PI * cfg.get("kappa_ghz_fwhm", 1.0)
    g = float(cfg.get("g_rad_per_ns", DEFAULTS.g_ensemble))
    rates = _rates(cfg, 0.0)
    eta_grid = _eta_grid(cfg, gamma)
    w = float(cfg.get("w_over_kappa", 3.0)) * kappa
    delta_grid = kappa * np.asarray(cfg["delta_over_kappa"], dtype=float)
    weight_fwhm = TWO_PI * float(cfg.get("weight_fwhm_ghz", 300.0))
    rows, averaged = meanfield.detuning_sweep_and_average(
        int(cfg.get("n_emitters", 500)),
        delta_grid,
        eta_grid,
        g,
        rates,
        w=w,
        kappa=kappa,
        weight_fwhm=weight_fwhm,
    )
    out = [(*row, 0) for row in rows]
    avg_slope = meanfield.max_loglog_slope(eta_grid, averaged)
    for eta, i_rad in zip(eta_grid, averaged):
        out.append((w / kappa, 0.0, eta / gamma, i_rad, avg_slope, 1))
    writer.csv(
        "radiation_vs_detuning.csv",
        ("w_over_kappa", "delta_over_kappa", "eta_over_gamma", "I_rad", "max_slope",
         "weighted"),
        out,
    )
    writer.count(len(out))


_TASKS = {
    "dicke_population_map": run_dicke_population_map,
    "dicke_pump_sweep": run_dicke_pump_sweep,
    "g2_traces": run_g2_traces,
    "g2_features": run_g2_features,
    "meanfield_widths": run_meanfield_widths,
    "meanfield_detuning": run_meanfield_detuning,
}


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _handle_simulate(args, writer):
    if args.engine == "dicke":
        cfg = {
            "task": "dicke_population_map",
            "n": args.n,
            "gamma_collective_per_ns": args.gamma_collective,
            "gamma_per_ns": args.gamma,
            "chi_per_ns": args.chi,
            "eta_over_gamma": args.eta_over_gamma,
        }
        run_dicke_population_map(cfg, writer)
        return cfg
    if args.engine == "oracle":
        from . import oracle

        rates = RateSet(
            gamma=args.gamma, chi=args.chi, eta=args.eta_over_gamma * args.gamma
        )
        spec = EmitterEnsembleSpec(
            sub_ensembles=(
                SubEnsemble(count=args.n, omega=args.delta, g=args.g, rates=rates),
            ),
            cavity=CavityParams(
                omega_c=0.0, kappa=TWO_PI * args.kappa_ghz, n_max=args.n_max
            ),
        )
        n_photon, system, _ = oracle.steady_state_photon_number(spec)
        writer.json(
            "summary.json",
            {
                "n_emitters": args.n,
                "photon_number": n_photon,
                "radiation_rate_per_ns": spec.cavity.kappa * n_photon,
                "hilbert_dim": system.hilbert_dim,
            },
        )
        writer.count(1)
        return {"task": "oracle_steady_state", **vars(args)}
    # meanfield
    kappa = TWO_PI * args.kappa_ghz
    rates = RateSet(gamma=args.gamma, chi=args.chi, eta=args.eta_over_gamma * args.gamma)
    w = args.w_over_kappa * kappa
    n_bins = args.n_bins or meanfield.adaptive_n_bins(w, kappa)
    dist = GaussianDistributionSpec(
        mu=args.delta_over_kappa * kappa, w=max(w, 1e-12), n_bins=n_bins
    )
    spec = discretize_gaussian(
        dist, args.n_emitters, args.g, rates, CavityParams(omega_c=0.0, kappa=kappa)
    )
    sol = meanfield.solve_cumulant_steady_state(spec)
    writer.json(
        "summary.json",
        {
            "n_emitters": args.n_emitters,
            "n_sub_ensembles": len(spec.sub_ensembles),
            "photon_number": sol.state.photon_number,
            "radiation_rate_per_ns": sol.radiation_rate,
            "residual": sol.residual,
        },
    )
    writer.csv(
        "sub_ensembles.csv",
        ("omega_rad_per_ns", "count", "sigma_z", "re_sigma_plus_a", "im_sigma_plus_a"),
        [
            (s.omega, s.count, z, sa.real, sa.imag)
            for s, z, sa in zip(
                spec.sub_ensembles, sol.state.sigma_z, sol.state.sigma_plus_a
            )
        ],
    )
    writer.count(sol.iterations)
    return {"task": "meanfield_steady_state", **vars(args)}


def _handle_g2_model(args, writer):
    cfg = {
        "task": "g2_traces",
        "n_list": [args.n],
        "gamma_collective_per_ns": args.gamma_collective,
        "gamma_per_ns": args.gamma,
        "chi_per_ns": args.chi,
        "eta_over_gamma": args.eta_over_gamma,
        "tau_grid": {"t_min": args.tau_min, "t_max": args.tau_max, "n": args.tau_points},
    }
    trace = _g2_trace(cfg, args.n)
    writer.csv(
        "g2_model.csv",
        ("tau_ns", "g2"),
        list(zip(trace.tau_grid, trace.values)),
    )
    feats = correlations.extract_features(trace)
    writer.json(
        "features.json",
        {
            "peak_value": feats.peak_value,
            "dip_value": feats.dip_value,
            "decay_time_ns": feats.decay_time,
            "rise_time_ns": feats.rise_time,
            "asymptote": feats.asymptote,
        },
    )
    writer.count(len(trace.tau_grid))
    return cfg


def _handle_fit(args, writer):
    if args.what == "g2":
        tau, values, counts = fitting.load_histogram_csv(args.input)
        model = fitting.G2FitModel(
            a=0.2, b=0.1, tau1=5.0, tau2=50.0, c=0.3, tau3=0.1,
            irf_fwhm=args.irf_fwhm,
        )
        result = fitting.fit_g2(
            tau, values, model, purity=args.purity, counts=counts,
            fit_irf=args.fit_irf,
        )
        writer.json("fit_g2.json", result.as_dict())
        fitted = fitting.G2FitModel(**result.parameters)
        writer.csv(
            "fitted_curve.csv",
            ("tau_ns", "g2_fit"),
            list(zip(tau, fitted.evaluate(tau))),
        )
        cfg = {"task": "fit_g2", "input": args.input, "purity": args.purity}
    elif args.what == "power":
        records = fitting.load_power_sweep_csv(args.input)
        records = [r for r in records if r.channel.value == args.channel]
        rng = (
            (args.min_power, args.max_power)
            if args.min_power is not None or args.max_power is not None
            else None
        )
        if rng is not None:
            rng = (
                rng[0] if rng[0] is not None else 0.0,
                rng[1] if rng[1] is not None else float("inf"),
            )
        result = fitting.fit_power_law(records, power_range=rng)
        writer.json("fit_power.json", result.as_dict())
        cfg = {"task": "fit_power", "input": args.input, "channel": args.channel}
    else:  # lifetime
        import csv as _csv

        with open(args.input, newline="") as fh:
            reader = _csv.reader(fh)
            header = next(reader)
            if [h.strip().lower() for h in header] != ["intensity", "tau1_ns"]:
                raise ConfigError(f"unrecognized lifetime header {header}")
            records = [(float(r[0]), float(r[1])) for r in reader if r]
        result = fitting.fit_saturation_lifetime(records)
        writer.json("fit_lifetime.json", result.as_dict())
        cfg = {"task": "fit_lifetime", "input": args.input}
    writer.count(1)
    return cfg


def _handle_sweep(args, writer):
    if args.config:
        cfg = load_recipe_file(args.config)
    else:
        raise ConfigError("sweep requires --config with a task description")
    task = cfg.get("task")
    if task not in _TASKS:
        raise ConfigError(f"unknown sweep task {task!r}; choose from {sorted(_TASKS)}")
    _TASKS[task](cfg, writer)
    return cfg


def _handle_reproduce(args, writer):
    cfg = _recipe(args.panel)
    _TASKS[cfg["task"]](cfg, writer)
    return cfg


def load_recipe_file(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if "task" not in cfg:
        raise ConfigError("config file must name a task")
    return cfg


# ---------------------------------------------------------------------------
# Argument parsing and entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cavemit",
        description="Cavity-mediated collective emission: simulate, fit, reproduce.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    sim = sub.add_parser("simulate", help="steady-state solvers")
    sim_sub = sim.add_subparsers(dest="engine", required=True)
    for engine in ("dicke", "oracle", "meanfield"):
        p = sim_sub.add_parser(engine)
        common(p)
        p.add_argument("--gamma", type=float, default=DEFAULTS.gamma)
        p.add_argument("--chi", type=float, default=0.3)
        p.add_argument("--eta-over-gamma", type=float, default=2.0)
        if engine == "dicke":
            p.add_argument("--n", type=int, required=True)
            p.add_argument(
                "--gamma-collective", type=float, default=DEFAULTS.gamma_collective
            )
        elif engine == "oracle":
            p.add_argument("--n", type=int, required=True)
            p.add_argument("--g", type=float, default=0.5)
            p.add_argument("--delta", type=float, default=0.0)
            p.add_argument("--kappa-ghz", type=float, default=1.0)
            p.add_argument("--n-max", type=int, default=5)
        else:
            p.add_argument("--n-emitters", type=int, default=500)
            p.add_argument("--g", type=float, default=DEFAULTS.g_ensemble)
            p.add_argument("--w-over-kappa", type=float, default=1.0)
            p.add_argument("--delta-over-kappa", type=float, default=0.0)
            p.add_argument("--kappa-ghz", type=float, default=1.0)
            p.add_argument("--n-bins", type=int, default=None)

    g2p = sub.add_parser("g2", help="correlation functions")
    g2_sub = g2p.add_subparsers(dest="what", required=True)
    gm = g2_sub.add_parser("model")
    common(gm)
    gm.add_argument("--n", type=int, required=True)
    gm.add_argument("--gamma-collective", type=float, default=DEFAULTS.gamma_collective)
    gm.add_argument("--gamma", type=float, default=DEFAULTS.gamma)
    gm.add_argument("--chi", type=float, default=0.3)
    gm.add_argument("--eta-over-gamma", type=float, default=2.0)
    gm.add_argument("--tau-min", type=float, default=0.01)
    gm.add_argument("--tau-max", type=float, default=100.0)
    gm.add_argument("--tau-points", type=int, default=241)

    fit = sub.add_parser("fit", help="analysis fits")
    fit_sub = fit.add_subparsers(dest="what", required=True)
    fg = fit_sub.add_parser("g2")
    common(fg)
    fg.add_argument("--input", required=True)
    fg.add_argument("--purity", type=float, default=1.0)
    fg.add_argument("--irf-fwhm", type=float, default=0.4)
    fg.add_argument("--fit-irf", action="store_true")
    fp = fit_sub.add_parser("power")
    common(fp)
    fp.add_argument("--input", required=True)
    fp.add_argument("--channel", choices=("ZPL", "PSB"), default="ZPL")
    fp.add_argument("--min-power", type=float, default=None)
    fp.add_argument("--max-power", type=float, default=None)
    fl = fit_sub.add_parser("lifetime")
    common(fl)
    fl.add_argument("--input", required=True)

    sw = sub.add_parser("sweep", help="parameter sweeps from a task config file")
    common(sw)
    sw.add_argument("--config", required=True)

    rep = sub.add_parser("reproduce", help="figure reproduction recipes")
    rep.add_argument("panel", choices=FIG_PANELS)
    common(rep)

    return parser


def _dispatch(args, writer):
    if args.command == "simulate":
        return _handle_simulate(args, writer)
    if args.command == "g2":
        return _handle_g2_model(args, writer)
    if args.command == "fit":
        return _handle_fit(args, writer)
    if args.command == "sweep":
        return _handle_sweep(args, writer)
    if args.command == "reproduce":
        return _handle_reproduce(args, writer)
    raise ConfigError(f"unknown command {args.command!r}")


def _default_outdir(args):
    parts = [args.command]
    for attr in ("engine", "what", "panel"):
        if getattr(args, attr, None):
            parts.append(getattr(args, attr))
    return "-".join(parts)


def _fail(code, kind, message):
    print(
        json.dumps({"error": kind, "message": str(message), "exit_code": code}),
        file=sys.stderr,
    )
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, "config", err)
    except SystemExit as err:
        # argparse already printed usage/help; keep its exit code
        return int(err.code or 0)
    outdir = args.out or _default_outdir(args)
    manifest = RunManifest(
        subcommand=_default_outdir(args), config={}, seed=args.seed
    )
    writer = ArtifactWriter(outdir, manifest)
    start = time.monotonic()
    try:
        manifest.config = _dispatch(args, writer)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, "config", err)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as err:
        return _fail(EXIT_CONFIG, "config", err)
    except (RuntimeError, meanfield.MeanfieldError) as err:
        return _fail(EXIT_SOLVER, "solver", err)
    manifest.wall_seconds = time.monotonic() - start
    manifest.write(outdir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
