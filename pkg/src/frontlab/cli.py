"""Config-driven experiment runner.

Usage::

    frontlab <experiment> --config cfg.yaml [--out DIR] [--seed N] [--quiet]

Experiments: validate, wave, front, steepness, tails, stability,
asymptotic, comparison, sweep.  Exit codes: 0 success, 1 theorem-check
failure, 2 usage/config error.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
import yaml

from .evolve import (EvolveError, WindowPolicy, build_approx_front, evolve,
                     extend_run)
from .fields import FieldState, Grid, smoothed_step
from .fronts import (FrontError, check_steepness_bound, fit_exponential_tail,
                     interface_width, steepness, steepness_bound_constant)
from .kernels import KernelError, build_kernel, positive_decay_rate
from .reactions import (ReactionError, make_ignition, max_slice, min_slice,
                        validate_hypotheses)
from .stability import (InadmissibleAlpha, StabilityError, comparison_test,
                        run_asymptotic_experiment, run_stability_experiment,
                        select_alpha)
from .waves import WaveError, solve_traveling_wave

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

CONFIG_ERRORS = (KernelError, ReactionError, WaveError, EvolveError,
                 FrontError, StabilityError, InadmissibleAlpha,
                 KeyError, TypeError, ValueError)


class CheckFailure(Exception):
    """A theorem check failed; message names the violated inequality."""


# ---------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "kernel": {"family": "gaussian", "sigma": 1.0, "spacing": 0.05,
               "tail_tolerance": 1e-6},
    "reaction": {"theta": 0.3, "theta_tilde": 0.9, "a_mean": 1.5,
                 "a_amp": 0.5, "omega_t": 1.0},
    "grid": {"x_min": -50.0, "x_max": 50.0, "n": 2001},
    "time": {"s": -30.0, "t_end": 60.0, "dt": 0.05, "cadence": 1.0},
    "experiment": {},
    "output": {"dir": "out"},
    "seed": 0,
}


def _deep_update(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ValueError("config root must be a mapping")
        cfg = _deep_update(cfg, loaded)
    return cfg


def build_problem(cfg: dict):
    """(kernel, nonlinearity, grid) from the shared config sections."""
    kc = dict(cfg["kernel"])
    family = kc.pop("family")
    spacing = kc.pop("spacing")
    tail_tol = kc.pop("tail_tolerance")
    kern = build_kernel(family, spacing=spacing, tail_tolerance=tail_tol,
                        **kc)
    f = make_ignition(**cfg["reaction"])
    gc = cfg["grid"]
    grid = Grid(float(gc["x_min"]), float(gc["x_max"]), int(gc["n"]))
    dt = float(cfg["time"]["dt"])
    if dt > f.dt_max() + 1e-12:
        raise ValueError(f"dt={dt} exceeds the stability cap {f.dt_max():.4f}")
    return kern, f, grid


# ---------------------------------------------------------------------------
# output plumbing


class Artifacts:
    """Collects result files under one directory and writes the manifest."""

    def __init__(self, out_dir: Path, cfg: dict, quiet: bool):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.quiet = quiet
        self.files: list[str] = []
        self.t_start = time.time()

    def say(self, msg: str) -> None:
        if not self.quiet:
            click.echo(msg)

    def _register(self, path: Path) -> None:
        self.files.append(path.name)

    def write_csv(self, name: str, header: list[str],
                  columns: list[np.ndarray]) -> None:
        path = self.dir / name
        cols = [np.asarray(c) for c in columns]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join("%.17g" % v for v in row) + "\n")
        self._register(path)

    def write_summary(self, summary: dict) -> None:
        path = self.dir / "summary.json"
        flat = {k: (float(v) if isinstance(v, (int, float, np.floating))
                    else v) for k, v in summary.items()}
        path.write_text(json.dumps(flat, indent=2, sort_keys=True) + "\n")
        self._register(path)

    def plot(self, name: str, x, ys: dict, xlabel: str, ylabel: str,
             logy: bool = False) -> None:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except Exception:
            return
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, y in ys.items():
            ax.plot(x, y, label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(ys) > 1:
            ax.legend()
        fig.tight_layout()
        path = self.dir / name
        fig.savefig(path, dpi=110)
        plt.close(fig)
        self._register(path)

    def finish(self) -> None:
        cfg_blob = json.dumps(self.cfg, sort_keys=True).encode()
        hashes = {}
        for name in self.files:
            digest = hashlib.sha256((self.dir / name).read_bytes())
            hashes[name] = digest.hexdigest()
        manifest = {
            "config_sha256": hashlib.sha256(cfg_blob).hexdigest(),
            "files": hashes,
            "wall_time_s": round(time.time() - self.t_start, 3),
            "versions": {
                "python": sys.version.split()[0],
                "numpy": np.__version__,
            },
        }
        (self.dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# experiments


def _front_run(cfg, kern, f, grid, with_derivative=True):
    tc = cfg["time"]
    wave = solve_traveling_wave(kern, min_slice(f),
                                Grid(-60.0, 60.0, int(120.0 / kern.spacing)
                                     + 1))
    run = build_approx_front(kern, f, s=float(tc["s"]), grid=grid,
                             dt=float(tc["dt"]),
                             profile_fn=wave.profile_fn(),
                             derivative_fn=wave.derivative_fn(),
                             theta=f.theta, t_end=float(tc["t_end"]),
                             snapshot_every=float(tc["cadence"]),
                             with_derivative=with_derivative)
    return wave, run


def exp_validate(cfg, art: Artifacts) -> dict:
    kern, f, _ = build_problem(cfg)
    report = validate_hypotheses(kern, f)
    art.say(report.to_text())
    rows = sorted(report.verdicts.items())
    art.write_csv("hypotheses.csv", ["index"] + [k for k, _ in rows],
                  [np.array([0])] + [np.array([int(v)]) for _, v in rows])
    summary = {f"h_{k}": int(v) for k, v in rows}
    summary.update(c_fu=report.c_fu, beta_tilde=report.beta_tilde,
                   all_pass=int(report.all_pass))
    if not report.all_pass:
        raise CheckFailure("hypothesis violations: "
                           + "; ".join(report.violations))
    return summary


def exp_wave(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    tol = float(cfg["experiment"].get("tol", 1e-8))
    tw_lo = solve_traveling_wave(kern, min_slice(f), grid, tol=tol)
    tw_hi = solve_traveling_wave(kern, max_slice(f), grid, tol=tol)
    art.write_csv("wave_profiles.csv", ["x", "phi_min", "dphi_min",
                                        "phi_max", "dphi_max"],
                  [tw_lo.x, tw_lo.phi, tw_lo.dphi, tw_hi.phi, tw_hi.dphi])
    art.plot("wave_profiles.png", tw_lo.x,
             {"phi_min": tw_lo.phi, "phi_max": tw_hi.phi}, "x", "phi")
    summary = {"c_star_min": tw_lo.speed, "c_star_max": tw_hi.speed,
               "residual_min": tw_lo.residual_norm,
               "residual_max": tw_hi.residual_norm}
    if tw_lo.speed <= 0 or tw_hi.speed <= 0:
        raise CheckFailure("wave speed must be positive")
    if tw_lo.residual_norm > tol or tw_hi.residual_norm > tol:
        raise CheckFailure("wave residual exceeds tolerance")
    if tw_hi.speed <= tw_lo.speed:
        raise CheckFailure("speed ordering c*(f_max) > c*(f_min) failed")
    return summary


def exp_front(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    wave_lo, run = _front_run(cfg, kern, f, grid, with_derivative=False)
    wave_hi = solve_traveling_wave(kern, max_slice(f),
                                   Grid(-60.0, 60.0,
                                        int(120.0 / kern.spacing) + 1))
    ts, xs = run.interface_track()
    _, speeds = run.interface_speeds()
    widths = np.array([interface_width(s, 0.05) for s in run.snapshots])
    art.write_csv("front_track.csv", ["t", "x_theta", "speed", "width"],
                  [ts, xs, speeds, widths])
    art.plot("front_track.png", ts, {"x_theta": xs}, "t", "interface")
    art.plot("front_width.png", ts, {"width": widths}, "t", "width")
    s = float(cfg["time"]["s"])
    sel = np.asarray(ts) >= s + 20.0
    lo, hi = 0.98 * wave_lo.speed, 1.02 * wave_hi.speed
    summary = {"y_s": run.y_s, "speed_min": float(np.min(speeds[sel])),
               "speed_max": float(np.max(speeds[sel])),
               "envelope_lo": lo, "envelope_hi": hi,
               "width_max": float(np.max(widths[sel])),
               "width_median": float(np.median(widths[sel]))}
    if summary["speed_min"] < lo or summary["speed_max"] > hi:
        raise CheckFailure("interface speed left the envelope "
                           f"[{lo:.4f}, {hi:.4f}]")
    if summary["width_max"] > 2.0 * summary["width_median"]:
        raise CheckFailure("interface width is not uniformly bounded")
    return summary


def exp_steepness(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    _, run = _front_run(cfg, kern, f, grid)
    half_width = float(cfg["experiment"].get("half_width", 5.0))
    s = float(cfg["time"]["s"])
    ts, xs = run.interface_track()
    vals = []
    for snap, x_ref in zip(run.snapshots, xs):
        if snap.t < s + 5.0:
            continue
        vals.append((snap.t, steepness(snap, x_ref, half_width)))
    tt = np.array([v[0] for v in vals])
    ss = np.array([v[1] for v in vals])
    art.write_csv("steepness.csv", ["t", "sup_w"], [tt, ss])
    art.plot("steepness.png", tt, {"sup_w": ss}, "t", "sup w near front")
    alpha_m = -float(np.max(ss))
    cadence = float(cfg["time"]["cadence"])
    const = steepness_bound_constant(kern, f.lipschitz_bound(0.0, 2.0),
                                     dt=cadence, offset=0.0, half_width=1.0)
    margins = []
    for j in range(len(run.snapshots) - 1):
        snap = run.snapshots[j]
        nxt = run.snapshots[j + 1]
        if snap.t < s + 5.0 or snap.w is None or nxt.w is None:
            continue
        for delta in (-2.0, 0.0, 2.0):
            x = xs[j + 1] + delta
            lhs, rhs = check_steepness_bound(snap, nxt, const, z=x, x=x,
                                             h_int=1.0)
            margins.append(rhs - lhs)
    worst = float(np.min(margins)) if margins else float("nan")
    summary = {"alpha_m": alpha_m, "bound_constant": const.value,
               "bound_margin_min": worst}
    if alpha_m <= 0:
        raise CheckFailure("front is not uniformly steep (alpha_m <= 0)")
    if worst < -1e-8:
        raise CheckFailure("pointwise steepness bound violated")
    return summary


def exp_tails(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    _, run = _front_run(cfg, kern, f, grid)
    snap = run.snapshots[-1]
    x_ref = run.interface_at(snap.t)
    right = fit_exponential_tail(snap, "right", x_from=x_ref + 8.0,
                                 values=snap.w)
    left = fit_exponential_tail(snap, "left", x_to=x_ref - 8.0,
                                values=snap.w)
    ts, _ = run.interface_track()
    _, speeds = run.interface_speeds()
    sel = np.asarray(ts) >= float(cfg["time"]["s"]) + 20.0
    c_min_meas = 0.98 * float(np.min(speeds[sel]))
    target = positive_decay_rate(kern, c_min_meas)
    art.write_csv("tails.csv", ["x", "u", "w"], [snap.x, snap.u, snap.w])
    art.plot("tails.png", snap.x, {"|w|": np.abs(snap.w) + 1e-30},
             "x", "|w|", logy=True)
    summary = {"right_rate": right.rate, "left_rate": left.rate,
               "right_r2": right.r_squared, "left_r2": left.r_squared,
               "target_rate": target}
    if right.rate < 0.9 * target:
        raise CheckFailure("right tail decays slower than the kernel bound")
    if left.rate <= 0:
        raise CheckFailure("left tail of the derivative does not decay")
    return summary


def exp_stability(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    _, run = _front_run(cfg, kern, f, grid)
    ec = cfg["experiment"]
    s = float(cfg["time"]["s"])
    t0 = float(ec.get("t0", cfg["time"]["t_end"]))
    params = select_alpha(run, kern, f, t_from=s + 20.0)
    dt = float(cfg["time"]["dt"])
    cadence = float(ec.get("cadence", 2.0))
    horizon = round(float(ec.get("horizon_omega", 5.0)) / params.omega
                    / dt) * dt
    ref = extend_run(run, kern, f, t_end=t0 + horizon + 2 * cadence, dt=dt,
                     snapshot_every=cadence, with_derivative=False,
                     window_policy=WindowPolicy(level=run.level))
    eps = float(ec.get("eps", params.eps0))
    report = run_stability_experiment(
        ref, kern, f, params, eps=eps, rho_fn=lambda x: np.ones_like(x),
        t0=t0, horizon=horizon, dt=dt, cadence=cadence)
    art.write_csv("sandwich.csv",
                  ["t", "envelope_distance", "q", "zeta_minus", "zeta_plus"],
                  [report.times, report.envelope_distance, report.q_values,
                   report.zeta_minus, report.zeta_plus])
    art.plot("sandwich.png", report.times,
             {"distance": report.envelope_distance + 1e-30,
              "q": report.q_values}, "t", "distance", logy=True)
    i3 = int(np.argmin(np.abs(report.times - (t0 + 3.0 / params.omega))))
    summary = dict(params.as_dict())
    summary.update(eps=eps, horizon=horizon,
                   worst_violation=report.worst_violation,
                   violation_count=report.violation_count,
                   distance_at_3_over_omega=report.envelope_distance[i3])
    budget = float(ec.get("violation_budget", 1e-6)) + report.edge_defect
    summary["edge_defect"] = report.edge_defect
    if report.worst_violation > budget:
        raise CheckFailure("sandwich violated beyond the discretization "
                           f"budget: {report.worst_violation:.3e}")
    if summary["distance_at_3_over_omega"] > 0.06 * eps:
        raise CheckFailure("envelope distance at 3/omega exceeds 0.06*eps")
    return summary


def exp_asymptotic(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    _, run = _front_run(cfg, kern, f, grid, with_derivative=False)
    ec = cfg["experiment"]
    t0 = float(ec.get("t0", cfg["time"]["t_end"]))
    horizon = float(ec.get("horizon", 400.0))
    dt = float(cfg["time"]["dt"])
    cadence = float(ec.get("cadence", 2.0))
    ref = extend_run(run, kern, f, t_end=t0 + horizon + 2 * cadence, dt=dt,
                     snapshot_every=cadence, with_derivative=False,
                     window_policy=WindowPolicy(level=run.level))
    ref0 = ref.trajectory.at_time(t0)
    shape = ec.get("initial", "mollified_step")
    x_ref = ref.interface_at(t0)
    if shape == "mollified_step":
        u0 = smoothed_step(Grid(ref0.x[0], ref0.x[-1], ref0.x.size),
                           center=x_ref, width=2.0)
        u0 = u0.with_(t=t0)
        evolve_ff = False
    elif shape == "liminf_above_theta":
        level = float(ec.get("plateau", 0.6))
        base = smoothed_step(Grid(ref0.x[0], ref0.x[-1], ref0.x.size),
                             center=x_ref, width=2.0)
        u0 = base.with_(t=t0, u=level * base.u, u_left=level, u_right=0.0,
                        w=None)
        evolve_ff = True
    else:
        raise ValueError(f"unknown initial shape {shape!r}")
    if evolve_ff:
        # let the subcritical left plateau burn up to 1 before tracking
        burn = float(ec.get("burn_in", 60.0))
        t_burn = t0
        for _ in range(4):
            t_burn += burn
            traj = evolve(u0, kern, f, t_burn, dt, snapshot_every=burn,
                          window_policy=WindowPolicy(level=ref.level),
                          evolve_far_fields=True)
            u0 = traj.snapshots[-1]
            if abs(u0.u_left - 1.0) <= 1e-8:
                break
        u0 = u0.with_(u_left=1.0)
        if u0.t >= t0 + horizon - 50.0:
            raise ValueError("horizon too short for the burn-in phase")
    report = run_asymptotic_experiment(ref, kern, f, u0, t0=u0.t,
                                       horizon=t0 + horizon - u0.t, dt=dt,
                                       cadence=cadence)
    art.write_csv("asymptotic.csv", ["t", "best_shift_distance"],
                  [report.distance_times, report.sup_distances])
    art.plot("asymptotic.png", report.distance_times,
             {"d(t)": report.sup_distances + 1e-30}, "t", "d(t)", logy=True)
    summary = {"initial": shape, "zeta_star": report.zeta_star,
               "rate": report.fitted_rate, "r_squared": report.r_squared,
               "final_distance": float(report.sup_distances[-1])}
    if report.fitted_rate is None or report.fitted_rate <= 0:
        raise CheckFailure("best-shift distance does not decay")
    if report.r_squared < 0.98:
        raise CheckFailure("decay is not log-linear (R^2 < 0.98)")
    return summary


def exp_comparison(cfg, art: Artifacts) -> dict:
    kern, f, grid = build_problem(cfg)
    ec = cfg["experiment"]
    n_pairs = int(ec.get("pairs", 100))
    t_end = float(ec.get("t_end", 3.0))
    dt = float(cfg["time"]["dt"])
    rng = np.random.default_rng(int(cfg["seed"]))
    if ec.get("force_unordered", False):
        base = smoothed_step(grid, center=0.0, width=2.0)
        hi = base.with_(u=np.clip(base.u - 0.2, 0.0, 1.0))
        comparison_test(base, hi, kern, f, t_end, dt)
    margins = []
    for _ in range(n_pairs):
        center = rng.uniform(-5.0, 5.0)
        width = rng.uniform(0.5, 4.0)
        lo = smoothed_step(grid, center=center, width=width)
        bump = rng.uniform(0.0, 0.3) * np.exp(
            -((grid.x - rng.uniform(-10.0, 10.0)) / 4.0) ** 2)
        hi = lo.with_(u=np.clip(lo.u + bump, 0.0, 1.0))
        rep = comparison_test(lo, hi, kern, f, t_end, dt)
        margins.append(rep.min_margin)
    margins = np.array(margins)
    art.write_csv("comparison.csv", ["pair", "min_margin"],
                  [np.arange(n_pairs), margins])
    summary = {"pairs": n_pairs, "min_margin": float(np.min(margins))}
    if summary["min_margin"] < -1e-8:
        raise CheckFailure("comparison principle violated: ordered data "
                           "crossed")
    return summary


def _sweep_worker(args):
    sub_cfg, sub_dir, quiet = args
    code = _run_experiment(sub_cfg["experiment"]["name"], sub_cfg,
                           Path(sub_dir), quiet)
    return sub_dir, code


def exp_sweep(cfg, art: Artifacts) -> dict:
    ec = cfg["experiment"]
    cases = ec.get("cases")
    if not cases:
        raise ValueError("sweep requires experiment.cases")
    workers = int(ec.get("workers", 2))
    jobs = []
    for i, case in enumerate(cases):
        sub_cfg = _deep_update(cfg, case)
        name = sub_cfg.get("experiment", {}).get("name")
        if name in (None, "sweep"):
            raise ValueError(f"sweep case {i} must name a non-sweep "
                             "experiment")
        sub_dir = art.dir / f"case_{i:03d}"
        jobs.append((sub_cfg, str(sub_dir), True))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    codes = np.array([code for _, code in results])
    art.write_csv("sweep.csv", ["case", "exit_code"],
                  [np.arange(len(codes)), codes])
    summary = {"cases": len(codes), "failures": int(np.sum(codes != 0))}
    if summary["failures"]:
        raise CheckFailure(f"{summary['failures']} sweep case(s) failed")
    return summary


EXPERIMENTS = {
    "validate": exp_validate,
    "wave": exp_wave,
    "front": exp_front,
    "steepness": exp_steepness,
    "tails": exp_tails,
    "stability": exp_stability,
    "asymptotic": exp_asymptotic,
    "comparison": exp_comparison,
    "sweep": exp_sweep,
}


def _run_experiment(experiment: str, cfg: dict, out_dir: Path,
                    quiet: bool) -> int:
    art = Artifacts(out_dir, cfg, quiet)
    try:
        summary = EXPERIMENTS[experiment](cfg, art)
    except CheckFailure as err:
        art.write_summary({"passed": 0, "failure": str(err)})
        art.finish()
        art.say(f"CHECK FAILED: {err}")
        return EXIT_CHECK_FAILED
    except CONFIG_ERRORS as err:
        art.say(f"configuration error: {err}")
        return EXIT_CONFIG
    summary["passed"] = 1
    art.write_summary(summary)
    art.finish()
    art.say(f"{experiment}: ok ({out_dir})")
    return EXIT_OK


@click.command()
@click.argument("experiment",
                type=click.Choice(sorted(EXPERIMENTS)))
@click.option("--config", "config_path", type=click.Path(exists=False),
              default=None, help="YAML configuration file.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (overrides config).")
@click.option("--seed", type=int, default=None,
              help="Random seed (overrides config).")
@click.option("--quiet", is_flag=True, default=False)
def main(experiment, config_path, out_dir, seed, quiet):
    """Run one named front-propagation experiment."""
    try:
        if config_path is not None and not Path(config_path).exists():
            raise FileNotFoundError(f"config not found: {config_path}")
        cfg = load_config(config_path)
        if seed is not None:
            cfg["seed"] = int(seed)
        cfg.setdefault("experiment", {})
        cfg["experiment"]["name"] = experiment
        target = Path(out_dir) if out_dir else Path(cfg["output"]["dir"])
    except (OSError, yaml.YAMLError, ValueError, KeyError) as err:
        click.echo(f"configuration error: {err}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(_run_experiment(experiment, cfg, target, quiet))


if __name__ == "__main__":
    main()
