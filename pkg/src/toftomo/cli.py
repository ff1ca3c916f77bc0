"""Command-line entry point: ``toftomo <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  Every run writes ``manifest.json`` into its output directory with
the resolved configuration, package versions and SHA-256 digests of inputs.
"""

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bootstrap import BootstrapConfig, run_bootstrap
from .config import build_scenario, load_scenario
from .constants import (
    DEFAULT_N_MAX,
    FIT_DISPLACEMENT,
    FIT_LAMBDA,
    FIT_TRAP_FREQ_HZ,
    GRAVITY,
    K_B,
    MLE_MAX_ITERATIONS,
    MLE_TOLERANCE,
    PSF_SIGMA_X,
    PSF_SIGMA_Y,
    RB87_MASS,
    RL_FILTER_FLOOR,
    RL_ITERATIONS,
    TRAP_FREQ_N0_HZ,
    TRAP_FREQ_N1_HZ,
)
from .exceptions import ConfigError, DegenerateDataError, TomographyError
from .fitting import (
    center_of_mass_trace,
    fit_anharmonic_model,
    fit_ballistic,
    fit_damped_sinusoid,
    fit_fock_mixture,
    fit_gravity_drop,
)
from .fock import OscillatorSpec, fidelity, negativity, wigner
from .imaging import PsfModel, image_to_quadrature, richardson_lucy
from .io import (
    DataFileError,
    file_digest,
    read_image,
    read_quadrature,
    read_quadrature_dir,
    read_time_series,
    write_bootstrap_report,
    write_fit_result,
    write_hinton,
    write_image,
    write_json,
    write_mle_result,
    write_noise_bias_table,
    write_quadrature,
    write_robustness_map,
    write_wigner,
)
from .mle import MleConfig, reconstruct
from .pipeline import (
    DEFAULT_NOISE_LEVELS,
    NOISE_BIAS_STUDIES,
    ROBUSTNESS_DEPTH_RATIO,
    ROBUSTNESS_DISPLACEMENT_RATIO,
    render_frame,
    robustness_trap,
    run_anharmonic_robustness,
    run_noise_bias_study,
    simplex_grid,
    simulate_dataset,
    wigner_axes,
)
from .quadrature import QuadratureDataset, uniform_angles

log = logging.getLogger("toftomo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

#: Star point of the robustness study.
ROBUSTNESS_REFERENCE = (0.28, 0.57, 0.15)


# ---------------------------------------------------------------------------
# Helpers


def resolve_seed(cli_seed, default=0):
    """``--seed`` wins over ``TOMO_SEED``, which wins over ``default``."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("TOMO_SEED")
    if env is None or env.strip() == "":
        return int(default)
    try:
        seed = int(env)
    except ValueError as exc:
        raise ConfigError(f"TOMO_SEED must be an integer, got {env!r}", "TOMO_SEED") from exc
    if seed < 0:
        raise ConfigError("TOMO_SEED must be >= 0", "TOMO_SEED")
    return seed


def _versions():
    return {
        "toftomo": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _digests(paths):
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(x for x in p.rglob("*") if x.is_file() and x.name != "manifest.json"):
                out[str(f)] = file_digest(f)
        elif p.is_file():
            out[str(p)] = file_digest(p)
    return out


def write_manifest(out_dir, args, config, inputs=(), results=None):
    doc = {
        "subcommand": args.command if not getattr(args, "sub", None) else f"{args.command} {args.sub}",
        "config": config,
        "versions": _versions(),
        "inputs": _digests(inputs),
        "results": results or {},
    }
    return write_json(Path(out_dir) / "manifest.json", doc)


def _positive_int(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _replicas(text):
    val = int(text)
    if val < 2:
        raise argparse.ArgumentTypeError(f"at least 2 replicas are needed, got {val}")
    return val


def _triplet(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected P0,P1,P2, got {text!r}") from exc
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    return vals


def _rho_doc(rho):
    return {"n_max": rho.shape[0] - 1, "real": rho.real, "imag": rho.imag}


def _mle_flags(args):
    return MleConfig(n_max=args.nmax, tolerance=args.tol, max_iterations=args.max_iter)


def _wigner_outputs(out, rho, extent, step):
    axis = wigner_axes(extent, step)
    grid = wigner(rho, axis, axis, check=False)
    write_wigner(out / "wigner.csv", grid)
    write_hinton(out / "hinton.csv", rho)
    neg = negativity(grid)
    return {"wigner_min": neg.value, "wigner_min_x": neg.x, "wigner_min_p": neg.p, "wigner_integral": grid.integral()}


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    doc = load_scenario(args.config, args.set)
    doc["seed"] = resolve_seed(args.seed, doc["seed"])
    scenario = build_scenario(doc)
    cfg = scenario.config
    out = Path(args.out)
    rho0, data = simulate_dataset(cfg)
    write_json(out / "scenario.json", doc)
    write_json(out / "rho_true.json", _rho_doc(rho0))
    theta_mod = np.mod(cfg.angles, 2.0 * np.pi)
    variances = []
    for k, theta in enumerate(theta_mod):
        u, w = data.slice(theta)
        write_quadrature(out / f"quadrature_{k:03d}.csv",
                         QuadratureDataset(np.full(u.size, theta), u, w, data.bin_width))
        mean = np.sum(u * w) / np.sum(w)
        variances.append(float(np.sum(w * (u - mean) ** 2) / np.sum(w)))
        if args.frames:
            write_image(out / f"frame_{k:03d}.csv", render_frame(cfg, rho0, k, cfg.angles[k]))
    write_json(out / "variance_vs_theta.json", {"theta_rad": theta_mod, "u_variance": variances})
    write_manifest(out, args, doc, [args.config] if args.config else [],
                   {"n_angles": int(cfg.angles.size), "n_records": len(data)})
    log.info("wrote %d quadrature files to %s", cfg.angles.size, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# deconvolve


def cmd_deconvolve(args):
    frame = read_image(args.image)
    psf = PsfModel(args.psf_x, args.psf_y)
    decon = richardson_lucy(frame, psf, args.rl_iterations, args.rl_filter)
    out = Path(args.out)
    write_image(out / "deconvolved.csv", decon)
    results = {"total_counts": float(decon.counts.sum())}
    if args.theta is not None:
        spec = OscillatorSpec.from_frequency(args.mass, args.frequency_hz, DEFAULT_N_MAX)
        quad = image_to_quadrature(decon, args.theta, spec, u_max=args.u_max)
        write_quadrature(out / "quadrature.csv", quad)
        results["clamped"] = bool(quad.clamped)
    config = {"psf_sigma_x_m": args.psf_x, "psf_sigma_y_m": args.psf_y, "rl_iterations": args.rl_iterations,
              "rl_filter_floor": args.rl_filter, "theta_rad": args.theta, "frequency_hz": args.frequency_hz,
              "mass_kg": args.mass, "u_max": args.u_max}
    write_manifest(out, args, config, [args.image, str(args.image) + ".meta"], results)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reconstruct


def _frames_to_dataset(src, args):
    scen = src / "scenario.json"
    if not scen.is_file():
        raise DataFileError(f"{src}: frame inputs need the scenario.json written by simulate")
    cfg = build_scenario(load_scenario(scen)).config
    frames = sorted(src.glob("frame_*.csv"))
    if len(frames) != cfg.angles.size:
        raise DataFileError(f"{src}: {len(frames)} frames for {cfg.angles.size} angles")
    parts = []
    for path, theta in zip(frames, cfg.angles):
        decon = richardson_lucy(read_image(path), cfg.psf, args.rl_iterations, args.rl_filter)
        parts.append(image_to_quadrature(decon, theta, cfg.trap.spec, u_max=cfg.u_max))
    return QuadratureDataset.concatenate(parts)


def cmd_reconstruct(args):
    src = Path(args.input)
    if src.is_dir() and not any(src.glob("quadrature_*.csv")) and any(src.glob("frame_*.csv")):
        data = _frames_to_dataset(src, args)
        source = "frames"
    else:
        data = read_quadrature_dir(src)
        source = "quadrature"
    mle_cfg = _mle_flags(args)
    res = reconstruct(data, mle_cfg)
    out = Path(args.out)
    write_mle_result(out / "rho_mle.json", res)
    results = {
        "source": source,
        "iterations_used": res.iterations_used,
        "converged": res.converged,
        "final_step": res.final_step,
        "log_likelihood": res.log_likelihood,
        "populations": np.real(np.diag(res.rho))[:6],
    }
    results.update(_wigner_outputs(out, res.rho, args.wigner_extent, args.wigner_step))
    inputs = [src]
    truth = Path(args.truth) if args.truth else (src / "rho_true.json" if src.is_dir() else None)
    if truth is not None and truth.is_file():
        rho_true = read_mle_result_matrix(truth)
        if rho_true.shape != res.rho.shape:
            raise DataFileError(f"{truth}: dimension {rho_true.shape[0]} differs from n_max + 1 = {res.rho.shape[0]}")
        results["fidelity"] = fidelity(rho_true, res.rho)
        inputs.append(truth)
    config = {"nmax": args.nmax, "tol": args.tol, "max_iter": args.max_iter, "rl_iterations": args.rl_iterations,
              "rl_filter": args.rl_filter, "wigner_extent": args.wigner_extent, "wigner_step": args.wigner_step}
    write_manifest(out, args, config, inputs, results)
    if not res.converged:
        log.error("reconstruction did not converge in %d iterations", res.iterations_used)
        return EXIT_NUMERIC
    return EXIT_OK


def read_mle_result_matrix(path):
    """Density matrix from any JSON with ``real``/``imag``/``n_max`` keys."""
    try:
        doc = json.loads(Path(path).read_text())
        rho = np.asarray(doc["real"], dtype=float) + 1j * np.asarray(doc["imag"], dtype=float)
    except (OSError, ValueError, KeyError) as exc:
        raise DataFileError(f"{path}: cannot read a density matrix ({exc})") from exc
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DataFileError(f"{path}: matrix is not square")
    return rho


# ---------------------------------------------------------------------------
# wigner


def cmd_wigner(args):
    rho = read_mle_result_matrix(args.rho)
    out = Path(args.out)
    results = _wigner_outputs(out, rho, args.extent, args.step)
    write_manifest(out, args, {"extent": args.extent, "step": args.step}, [args.rho], results)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bootstrap


def cmd_bootstrap(args):
    doc = load_scenario(args.config, args.set)
    doc["seed"] = resolve_seed(args.seed, doc["seed"])
    cfg = build_scenario(doc).config
    replicas = args.replicas if args.replicas is not None else max(2, doc["bootstrap"]["replicas"] or 50)
    rho = read_mle_result_matrix(args.rho)
    if rho.shape[0] != cfg.trap.spec.dim:
        raise DataFileError(f"{args.rho}: dimension {rho.shape[0]} differs from trap.n_max + 1 = {cfg.trap.spec.dim}")
    bcfg = BootstrapConfig(
        n_replicas=replicas,
        noise=cfg.noise if cfg.noise is not None else BootstrapConfig().noise,
        rl_iterations=cfg.rl_iterations,
        rl_filter_floor=cfg.rl_filter_floor,
        seed=doc["seed"],
        geometry=cfg.imaging,
        psf=cfg.psf,
        shape=cfg.shape,
        total_counts=cfg.total_counts,
        n_averaged=cfg.n_averaged,
        blur=cfg.blur,
        u_max=cfg.u_max,
        noise_gain=cfg.noise_gain,
    )
    report = run_bootstrap(rho, cfg.angles, bcfg, cfg.mle, cfg.trap.spec, doc["wigner"]["extent"],
                           doc["wigner"]["step"])
    out = Path(args.out)
    write_bootstrap_report(out / "bootstrap.json", report, out / "replicas" if args.archive else None)
    doc["bootstrap"]["replicas"] = replicas
    write_manifest(out, args, doc, [p for p in (args.config, args.rho) if p], {
        "n_successful": report.n_successful,
        "negativity_mean": report.negativity_mean,
        "negativity_std": report.negativity_std,
        "n_failures": len(report.failures),
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _series_or_trace(args):
    path = Path(args.input)
    if path.is_dir() or _is_quadrature_csv(path):
        data = read_quadrature_dir(path) if path.is_dir() else read_quadrature(path)
        omega = 2.0 * np.pi * args.frequency_hz
        return center_of_mass_trace(data, omega, args.extractor), "center_of_mass_p0"
    return read_time_series(path), "time_series"


def _is_quadrature_csv(path):
    if not path.is_file():
        raise DataFileError(f"{path}: no such file")
    with open(path) as fh:
        return fh.readline().strip().startswith("theta_rad")


def cmd_fit(args):
    out = Path(args.out)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out", "input", "verbose", "set", "seed")}
    if args.sub == "damped-sinusoid":
        series, kind = _series_or_trace(args)
        res = fit_damped_sinusoid(series)
        extra = {"input_kind": kind}
    elif args.sub == "ballistic":
        res = fit_ballistic(read_time_series(args.input), args.mass)
        extra = {"temperature_equivalent_k": 2.0 * res["e_ke"] / K_B}
    elif args.sub == "gravity":
        res = fit_gravity_drop(read_time_series(args.input), args.g)
        extra = {}
    elif args.sub == "anharmonic":
        series, kind = _series_or_trace(args)
        spec = OscillatorSpec.from_frequency(args.mass, args.frequency_hz, args.nmax)
        if kind == "center_of_mass_p0":
            # convert centers from p0 units to kg m/s
            series = type(series)(series.t, series.y * spec.p0)
        res = fit_anharmonic_model(series, spec, fix_lambda=args.fix_lambda)
        extra = {"input_kind": kind}
    else:
        frame = read_image(args.input)
        spec = OscillatorSpec.from_frequency(args.mass, args.frequency_hz, DEFAULT_N_MAX)
        res = fit_fock_mixture(frame, PsfModel(args.psf_x, args.psf_y), spec)
        extra = {}
    write_fit_result(out / "fit.json", res, extra)
    inputs = [args.input]
    if Path(str(args.input) + ".meta").is_file():
        inputs.append(str(args.input) + ".meta")
    write_manifest(out, args, config, inputs, {"parameters": res.parameters, "errors": res.errors,
                                               "converged": res.converged, **extra})
    if not res.converged:
        log.error("fit did not converge: %s", res.message)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# appendix


def cmd_robustness(args):
    trap, x_i = robustness_trap(args.nmax, args.depth_ratio, args.displacement_ratio, args.lam,
                                args.frequency_hz, args.displacement_nm * 1e-9)
    grid = np.array(args.point) if args.point else simplex_grid(args.grid)
    mle_cfg = MleConfig(n_max=args.nmax, tolerance=args.tol, max_iterations=args.max_iter)

    def progress(i, pops, res):
        log.info("point %d/%d P=%s F=%.4f", i + 1, len(grid), tuple(np.round(pops, 3)), res["fidelity"])

    rmap = run_anharmonic_robustness(grid, trap, x_i, mle_cfg, uniform_angles(args.angles),
                                     grid_step=args.grid, progress=progress)
    out = Path(args.out)
    write_robustness_map(out / "robustness.csv", rmap)
    results = {"lambda": trap.lam, "frequency_hz": trap.spec.omega / (2.0 * np.pi), "displacement_m": x_i,
               "grid_step": args.grid, "n_points": int(len(grid))}
    try:
        k = rmap.lookup(ROBUSTNESS_REFERENCE, atol=1e-6)
        results["reference"] = {"populations": ROBUSTNESS_REFERENCE, "fidelity": rmap.fidelity[k],
                                "gamma_true": rmap.gamma_true[k], "gamma_mle": rmap.gamma_mle[k]}
    except KeyError:
        pass
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose", "set", "seed")}
    write_manifest(out, args, config, [], results)
    return EXIT_OK


def cmd_noise_bias(args):
    seed = resolve_seed(args.seed, 0)
    study = NOISE_BIAS_STUDIES[args.study]
    bcfg = BootstrapConfig(n_replicas=max(2, args.sims), seed=seed, n_averaged=1)
    mle_cfg = MleConfig(n_max=args.nmax, tolerance=args.tol, max_iterations=args.max_iter)
    table = run_noise_bias_study(args.study, tuple(args.levels), args.sims, bcfg, uniform_angles(args.angles),
                                 mle_cfg, args.nmax)
    out = Path(args.out)
    write_noise_bias_table(out / "noise_bias.csv", table)
    high = table.high_n_population(3)
    rho_hi, p_hi = table.trend(high)
    rho_w, p_w = table.trend(table.wigner_values)
    results = {
        "study": args.study,
        "base_populations": study[0],
        "noise_levels": table.noise_levels,
        "population_means": table.population_means,
        "wigner_means": table.wigner_means,
        "wigner_point": table.wigner_point,
        "high_n_spearman": {"rho": rho_hi, "p_value": p_hi},
        "wigner_spearman": {"rho": rho_w, "p_value": p_w},
    }
    write_json(out / "summary.json", results)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose", "set")}
    config["seed"] = seed
    write_manifest(out, args, config, [], results)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_mle_flags(p):
    p.add_argument("--nmax", type=int, default=DEFAULT_N_MAX, help="maximum Fock occupation (default %(default)s)")
    p.add_argument("--tol", type=float, default=MLE_TOLERANCE, help="trace-distance stop (default %(default)s)")
    p.add_argument("--max-iter", type=_positive_int, default=MLE_MAX_ITERATIONS,
                   help="iteration cap (default %(default)s)")


def _add_rl_flags(p):
    p.add_argument("--rl-iterations", type=int, default=RL_ITERATIONS, help="default %(default)s")
    p.add_argument("--rl-filter", type=float, default=RL_FILTER_FLOOR, help="division floor (default %(default)s)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--seed", type=int, default=None, help="overrides TOMO_SEED")

    parser = argparse.ArgumentParser(prog="toftomo", description="Time-of-flight motional-state tomography.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize quadrature data from a scenario")
    p.add_argument("config", nargs="?", help="scenario JSON (defaults are used when omitted)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario field")
    p.add_argument("--frames", action="store_true", help="also write the camera frames")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("deconvolve", parents=[common], help="Richardson-Lucy deconvolve one frame")
    p.add_argument("image")
    p.add_argument("-o", "--out", required=True)
    _add_rl_flags(p)
    p.add_argument("--psf-x", type=float, default=PSF_SIGMA_X)
    p.add_argument("--psf-y", type=float, default=PSF_SIGMA_Y)
    p.add_argument("--theta", type=float, default=None, help="also integrate to a quadrature CSV at this angle")
    p.add_argument("--frequency-hz", type=float, default=TRAP_FREQ_N1_HZ)
    p.add_argument("--mass", type=float, default=RB87_MASS)
    p.add_argument("--u-max", type=float, default=10.0)
    p.set_defaults(func=cmd_deconvolve)

    p = sub.add_parser("reconstruct", parents=[common], help="maximum-likelihood reconstruction")
    p.add_argument("input", help="quadrature CSV, or a directory of quadrature_*.csv or frame_*.csv")
    p.add_argument("-o", "--out", required=True)
    _add_mle_flags(p)
    _add_rl_flags(p)
    p.add_argument("--truth", default=None, help="reference density-matrix JSON for a fidelity report")
    p.add_argument("--wigner-extent", type=float, default=5.0)
    p.add_argument("--wigner-step", type=float, default=0.05)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("wigner", parents=[common], help="Wigner grid and Hinton table of a density matrix")
    p.add_argument("rho", help="density-matrix JSON")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--extent", type=float, default=5.0)
    p.add_argument("--step", type=float, default=0.05)
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("bootstrap", parents=[common], help="parametric bootstrap around a reconstruction")
    p.add_argument("rho", help="density-matrix JSON (e.g. rho_mle.json)")
    p.add_argument("--config", default=None, help="scenario JSON for trap, imaging and noise")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--replicas", type=_replicas, default=None)
    p.add_argument("--archive", action="store_true", help="write every replica's density matrix")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("fit", help="curve fits")
    fits = p.add_subparsers(dest="sub", required=True)
    for name, helptext in (
        ("damped-sinusoid", "time series CSV, or quadrature data reduced to a center-of-mass trace"),
        ("ballistic", "RMS size (m) versus flight time CSV"),
        ("gravity", "image-plane position (m) versus fall time CSV"),
        ("anharmonic", "mean momentum (kg m/s) versus evolution time CSV, or quadrature data"),
        ("fock-mixture", "background-subtracted image CSV with .meta sidecar"),
    ):
        q = fits.add_parser(name, parents=[common], help=helptext)
        q.add_argument("input")
        q.add_argument("-o", "--out", required=True)
        q.add_argument("--mass", type=float, default=RB87_MASS)
        if name in ("damped-sinusoid", "anharmonic"):
            q.add_argument("--extractor", choices=("mean", "gaussian"), default="mean",
                           help="center estimator when the input is quadrature data")
        if name in ("damped-sinusoid", "anharmonic", "fock-mixture"):
            default = TRAP_FREQ_N0_HZ if name != "fock-mixture" else TRAP_FREQ_N1_HZ
            q.add_argument("--frequency-hz", type=float, default=default)
        if name == "gravity":
            q.add_argument("--g", type=float, default=GRAVITY)
        if name == "anharmonic":
            q.add_argument("--nmax", type=int, default=DEFAULT_N_MAX)
            q.add_argument("--fix-lambda", type=float, default=None)
        if name == "fock-mixture":
            q.add_argument("--psf-x", type=float, default=PSF_SIGMA_X)
            q.add_argument("--psf-y", type=float, default=PSF_SIGMA_Y)
        q.set_defaults(func=cmd_fit)

    p = sub.add_parser("appendix", help="systematic studies")
    studies = p.add_subparsers(dest="sub", required=True)
    q = studies.add_parser("robustness", parents=[common], help="fidelity map under anharmonic evolution")
    q.add_argument("--grid", type=float, default=0.05, help="simplex grid spacing")
    q.add_argument("--point", type=_triplet, action="append", help="evaluate only these P0,P1,P2 points")
    q.add_argument("--lam", type=float, default=FIT_LAMBDA, help="fitted quartic strength before rescaling")
    q.add_argument("--frequency-hz", type=float, default=FIT_TRAP_FREQ_HZ, help="fitted frequency before rescaling")
    q.add_argument("--displacement-nm", type=float, default=FIT_DISPLACEMENT * 1e9)
    q.add_argument("--depth-ratio", type=float, default=ROBUSTNESS_DEPTH_RATIO)
    q.add_argument("--displacement-ratio", type=float, default=ROBUSTNESS_DISPLACEMENT_RATIO)
    q.add_argument("--angles", type=_positive_int, default=64)
    _add_mle_flags(q)
    q.add_argument("-o", "--out", required=True)
    q.set_defaults(func=cmd_robustness)

    q = studies.add_parser("noise-bias", parents=[common], help="reconstruction bias versus Gaussian noise")
    q.add_argument("--study", choices=sorted(NOISE_BIAS_STUDIES), default="n1")
    q.add_argument("--levels", type=float, nargs="+", default=list(DEFAULT_NOISE_LEVELS),
                   help="per-pixel RMS noise levels in counts")
    q.add_argument("--sims", type=_replicas, default=50)
    q.add_argument("--angles", type=_positive_int, default=64)
    _add_mle_flags(q)
    q.add_argument("-o", "--out", required=True)
    q.set_defaults(func=cmd_noise_bias)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateDataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TomographyError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
