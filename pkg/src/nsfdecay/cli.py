"""Command-line front end: ``nsfdecay <subcommand> [flags]``."""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from . import spectral as sp
from .besov import BesovParams, besov_norm, restricted_besov_norm
from .config import ConfigError, build_objects, load_config
from .harness import (DecayParams, InitialDataSpec, dump_json, fit_decay, fit_exponential,
                      radial_linear_decay, read_series_csv, run_experiment)
from .linear import (DimensionlessParams, block_decay_envelope, constructive_rate, spectral_abscissa,
                     symbol_matrix)
from .propcheck import SUITES, run_suite
from .solver import read_checkpoint, write_checkpoint

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2


class CheckFailed(RuntimeError):
    pass


def _params(args):
    return DimensionlessParams(args.beta, args.gamma, args.mu_tilde)


def _emit(obj, out=None):
    text = dump_json(obj)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _window(text):
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like T_A:T_B, got {text!r}")
    return a, b


def cmd_symbol(args):
    params = _params(args)
    rhos = _floats(args.rho)
    rows = []
    for r in rhos:
        m = symbol_matrix(r, params)
        ev = np.linalg.eigvals(m)
        ev = ev[np.lexsort((ev.imag, ev.real))]
        rows.append({"rho": r, "matrix": m.tolist(), "eigenvalues": [[float(e.real), float(e.imag)] for e in ev],
                     "spectral_abscissa": float(spectral_abscissa(r, params)),
                     "heat_rate": -params.mu_tilde * r * r})
    _emit({"version": __version__, "params": vars_of(params), "modes": rows}, args.out)


def vars_of(params):
    return {"beta": params.beta, "gamma": params.gamma, "mu_tilde": params.mu_tilde}


def cmd_lyapunov(args):
    params = _params(args)
    data = constructive_rate(params, args.rho0, form=args.form)
    out = {"version": __version__, "params": vars_of(params), **data.as_dict()}
    _emit(out, args.out)
    if not data.c0 > 0:
        raise CheckFailed(f"constructive rate c0 = {data.c0} is not positive")


def cmd_linear_decay(args):
    if args.config:
        cfg = load_config(args.config)
        cfg["solver"]["nonlinear"] = False
        if args.out:
            cfg["outputs"]["dir"] = args.out
        res = run_experiment(cfg)
        bad = [f for f in res.fits if f.get("exponent") is None]
        print(f"wrote {cfg['outputs']['dir']}")
        if bad:
            raise CheckFailed("fit failed for " + ", ".join(f["norm_id"] for f in bad))
        return
    params = _params(args)
    dp = DecayParams(3, args.s1, args.p)
    s_values = _floats(args.s) if args.s else [0.0, 1.0, 1.5, 2.5]
    times = np.geomspace(args.t_min, args.t_max, args.n_times)
    spec = InitialDataSpec(args.kind, 1.0, args.width)
    series = radial_linear_decay(params, times, s_values, spec, s1=args.s1)
    fits = []
    failed = []
    for s, v in zip(s_values, series):
        f = fit_decay(times, v, (args.t_min, args.t_max))
        theory = dp.theory_exponent(s)
        ok = abs(f.exponent - theory) <= args.tol
        fits.append({"s": s, "exponent": f.exponent, "r2": f.r2, "theory_exponent": theory, "within_tol": ok})
        if not ok:
            failed.append(s)
    env = []
    for j in range(-4, 1):
        rep = block_decay_envelope(j, params)
        env.append({"j": j, "fitted_rate": rep.rate, "c_fit": rep.c_fit, "c0": rep.c0,
                    "certified_rate": rep.certified_rate, "ok": rep.ok})
    _emit({"version": __version__, "params": vars_of(params), "mode": "radial", "s1": args.s1,
           "kind": args.kind, "width": args.width, "window": [args.t_min, args.t_max], "tolerance": args.tol,
           "fits": fits, "block_envelopes": env}, args.out)
    if failed:
        raise CheckFailed("rate law -(s1+s)/2 violated for s = " + ", ".join(format(s, "g") for s in failed))
    if not all(e["ok"] for e in env):
        raise CheckFailed("block decay envelope slower than the certified rate")


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.t_end is not None:
        cfg["solver"]["t_end"] = args.t_end
    if args.out:
        cfg["outputs"]["dir"] = args.out
    if args.linear:
        cfg["solver"]["nonlinear"] = False
    build_objects(cfg)
    res = run_experiment(cfg, plots=args.plots or None)
    out_dir = cfg["outputs"]["dir"]
    write_checkpoint(res.final, os.path.join(out_dir, "final.ckpt"),
                     {"config_physics": cfg["physics"], "version": __version__})
    print(f"wrote {out_dir} (t = {res.final.t:g})")


def cmd_norms(args):
    state, meta = read_checkpoint(args.checkpoint)
    bp = BesovParams(args.s, args.p, args.r)
    out = {"version": __version__, "checkpoint": args.checkpoint, "t": state.t, "s": args.s, "p": args.p,
           "r": args.r, "part": args.part, "j0": args.j0, "norms": {}}
    for name, f in state.fields().items():
        if args.part == "full":
            out["norms"][name] = besov_norm(f, bp)
        else:
            out["norms"][name] = restricted_besov_norm(f, bp, args.part, args.j0)
    out["total"] = float(sum(out["norms"].values()))
    _emit(out, args.out)


def cmd_fit(args):
    t, v = read_series_csv(args.csv, args.col)
    fitter = fit_exponential if args.exponential else fit_decay
    f = fitter(t, v, args.window)
    _emit({"version": __version__, "csv": args.csv, "norm_id": args.col,
           "model": "exponential" if args.exponential else "power", **f.as_dict()}, args.out)


def cmd_propcheck(args):
    checks = run_suite(args.suite, args.seed)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        raise CheckFailed("violated: " + "; ".join(c.name for c in failed))


def build_parser():
    ap = argparse.ArgumentParser(prog="nsfdecay", description=__doc__)
    ap.add_argument("--version", action="version", version=f"nsfdecay {__version__}")
    ap.add_argument("--threads", type=int, default=os.cpu_count(),
                    help="FFT worker threads (default: all cores)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def dimless(p):
        p.add_argument("--beta", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--mu-tilde", type=float, default=1.0)
        p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("symbol", help="mode matrix and eigenvalues at given frequencies")
    dimless(p)
    p.add_argument("--rho", default="0.1,1,10", help="comma-separated frequency magnitudes")
    p.set_defaults(func=cmd_symbol)

    p = sub.add_parser("lyapunov", help="constants K, C0, c0 of the Lyapunov functional")
    dimless(p)
    p.add_argument("--rho0", type=float, default=1.0)
    p.add_argument("--form", choices=("lyapunov", "young", "literal"), default="lyapunov")
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("linear-decay", help="linear rate study (grid-free radial, or box with --config)")
    dimless(p)
    p.add_argument("--config")
    p.add_argument("--s1", type=float, default=1.5)
    p.add_argument("--p", type=float, default=2.0, help="Lebesgue exponent used to validate s1")
    p.add_argument("--kind", choices=("gaussian", "power"), default="gaussian")
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--s", help="comma-separated regularity indices (default 0,1,1.5,2.5)")
    p.add_argument("--t-min", type=float, default=10.0)
    p.add_argument("--t-max", type=float, default=1000.0)
    p.add_argument("--n-times", type=int, default=41)
    p.add_argument("--tol", type=float, default=0.07)
    p.set_defaults(func=cmd_linear_decay)

    p = sub.add_parser("simulate", help="full nonlinear run from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides outputs.dir)")
    p.add_argument("--t-end", type=float)
    p.add_argument("--linear", action="store_true", help="switch the nonlinearity off")
    p.add_argument("--plots", action="store_true", help="write plots/*.svg")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("norms", help="Besov norms of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--part", choices=("full", "low", "high"), default="full")
    p.add_argument("--j0", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("fit", help="decay exponent of one column of a series CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--col", required=True)
    p.add_argument("--window", type=_window, required=True, help="T_A:T_B")
    p.add_argument("--exponential", action="store_true", help="fit exp(-c t) instead of <t>^k")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("propcheck", help="run invariant suites; exit 0 iff all pass")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_propcheck)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        ap.error("--threads must be at least 1")
    sp.set_threads(args.threads)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
