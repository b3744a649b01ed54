"""Command-line driver for the emulation-calibration pipeline.

Each subcommand reads artifact files, writes artifact files, and records the
flags that produced them, so a run can be replayed from its outputs alone.

    binarycal --out run synthesize
    binarycal --out run lpca --ensemble run/ensemble.csv --components 10
    binarycal --out run emulate --ensemble run/ensemble.csv --lpca run/lpca.json
    binarycal --out run calibrate --ensemble run/ensemble.csv \\
        --observation run/observation.csv --emulator run/emulator.json
    binarycal --out run project --design run/ensemble.design.csv \\
        --response run/response.csv --chain run/chain_0.csv
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import discrepancy as disc
from . import emulator as emu
from . import lpca
from . import projection as proj
from . import synthetic as syn
from .core import (ValidationError, ensure_dir, load_columns, load_design, load_ensemble,
                   load_observation, save_ensemble, save_observation, save_vector)

log = logging.getLogger("binarycal")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _fold_fraction(s):
    v = float(s)
    if not 0 < v <= 0.5:
        raise argparse.ArgumentTypeError(f"fold fraction must lie in (0, 0.5], got {s}")
    return v


def _cutoff(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"cutoff must lie in (0, 1), got {s}")
    return v


# output location and thread count do not change results, so they stay out
_NOT_CONFIG = ("func", "log_level", "out", "threads")


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _rel(target, start_dir) -> str:
    return os.path.relpath(Path(target).resolve(), Path(start_dir).resolve())


# ---------------------------------------------------------------- subcommands

def cmd_synthesize(args) -> None:
    out = ensure_dir(args.out)
    cfg = syn.SyntheticConfig(sill=args.sill, range=args.range, nugget=args.nugget,
                              saturation_logit=args.saturation_logit, seed=args.seed)
    ens = syn.synth_ensemble(cfg)
    obs, noise = syn.make_observation(cfg)
    truth = syn.synth_output(cfg.truth, cfg.grid, cfg)
    save_ensemble(ens, out / "ensemble.csv")
    save_observation(obs, out / "observation.csv")
    save_observation(truth, out / "truth_output.csv")
    flipped = obs.values != truth.values
    save_vector(out / "discrepancy.csv", {"cell": np.arange(cfg.grid.n), "logit": noise,
                                          "manifest": np.where(flipped, noise, 0.0)})
    response = [syn.ice_volume(syn.unit_to_native(cfg, u), cfg.grid) for u in ens.design.points]
    save_vector(out / "response.csv", {"response": response})
    _write_json(out / "synthesize.json", {
        "config": _config(args), "p": ens.p, "n": ens.n,
        "truth_native": list(cfg.truth), "truth_unit": cfg.truth_unit().tolist(),
        "truth_response": syn.ice_volume(cfg.truth, cfg.grid),
        "flip_fraction": float(flipped.mean())})
    log.info("wrote %dx%d ensemble; observation flips %.1f%% of cells",
             ens.p, ens.n, 100 * flipped.mean())


def cmd_lpca(args) -> None:
    out = ensure_dir(args.out)
    Y = load_ensemble(args.ensemble)
    model = lpca.fit(Y, args.components, max_iter=args.max_iter, rel_tol=args.tol,
                     restarts=args.restarts, seed=args.seed)
    lpca.save_model(model, out / "lpca.json", {"config": _config(args),
                                               "misclassification": lpca.misclassification(Y, model)})
    save_vector(out / "deviance.csv", {"iteration": np.arange(len(model.deviance_trace)),
                                       "deviance": np.asarray(model.deviance_trace)})
    log.info("J_y=%d, %d iterations, converged=%s", model.j_y,
             len(model.deviance_trace) - 1, model.converged)


def cmd_emulate(args) -> None:
    out = ensure_dir(args.out)
    Y = load_ensemble(args.ensemble)
    model = lpca.load_model(args.lpca)
    if model.p != Y.p:
        raise ValidationError(f"lpca has {model.p} runs but ensemble has {Y.p}")
    em = emu.fit_emulator(model, Y.design, args.restarts, args.seed, args.threads)
    emu.save_emulator(em, out / "emulator.json", _rel(args.lpca, out), {"config": _config(args)})


def cmd_cv(args) -> None:
    out = ensure_dir(args.out)
    Y = load_ensemble(args.ensemble)
    opts = {"max_iter": args.max_iter, "rel_tol": args.tol}
    report = emu.cross_validate(Y, args.components, args.folds, args.seed, opts,
                                args.restarts, args.threads)
    emu.save_cv_report(report, out / "cv.csv")
    _write_json(out / "cv.json", {"config": _config(args), "overall": report.overall,
                                  "folds": report.folds, "j_y": report.j_y})
    log.info("cross-validated misclassification %.4f", report.overall)


def _write_diagnostics(out: Path, chains, grid: int, config: dict) -> None:
    diag = cal.chain_diagnostics(chains)
    diag["config"] = config
    diag["n_chains"] = len(chains)
    _write_json(out / "diagnostics.json", diag)
    pooled = np.vstack([c.theta for c in chains])
    d = pooled.shape[1]
    for i, j in itertools.combinations(range(d), 2):
        xs, ys, dens = cal.pairwise_density(pooled, (i, j), grid)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        save_vector(out / f"density_theta_{i + 1}_theta_{j + 1}.csv",
                    {f"theta_{i + 1}": gx, f"theta_{j + 1}": gy, "density": dens})


def cmd_calibrate(args) -> None:
    out = ensure_dir(args.out)
    Y = load_ensemble(args.ensemble)
    Z = load_observation(args.observation, Y.grid)
    em = emu.load_emulator(args.emulator)
    basis = disc.build_basis(disc.mismatch_proportions(Y, Z), args.cutoff)
    save_vector(out / "basis.csv", {"cell": np.arange(Y.n), "k_d": basis.k_d, "r": basis.r})
    prob = cal.CalibrationProblem(Z, em.lpca, em.gps, basis, cal.PriorConfig.unit(Y.design.d))
    log.info("reduced model has J_y + d + 2 = %d + %d + 2 = %d parameters",
             prob.j_y, prob.d, prob.j_y + prob.d + 2)
    cfg = cal.RunConfig(iterations=args.iterations, burn_in=args.burn_in, thin=args.thin,
                        seed=args.seed)
    chains = cal.calibrate_many(prob, cfg, args.chains, args.threads)
    config = _config(args)
    for k, ch in enumerate(chains):
        save_vector(out / f"chain_{k}.csv", ch.columns())
        _write_json(out / f"chain_{k}.json", {"config": config, "chain": k,
                                              "acceptance": ch.acceptance, "meta": ch.meta})
        log.info("chain %d: acceptance %s", k,
                 {b: round(a, 3) for b, a in ch.acceptance.items()})
    _write_diagnostics(out, chains, args.grid, config)


def _load_chain(path) -> cal.Chain:
    cols = load_columns(path)
    if not cols or len(next(iter(cols.values()))) == 0:
        raise ValidationError(f"empty chain: {path}")
    return cal.Chain.from_columns(cols)


def cmd_diagnose(args) -> None:
    out = ensure_dir(args.out)
    chains = [_load_chain(p) for p in args.chain]
    _write_diagnostics(out, chains, args.grid, _config(args))


def cmd_project(args) -> None:
    out = ensure_dir(args.out)
    design = load_design(args.design)
    response = load_columns(args.response)
    if args.column not in response:
        raise ValidationError(f"response file has no column {args.column!r}")
    sgp = proj.fit_scalar(design, response[args.column], args.restarts, args.seed,
                          nugget=not args.no_nugget)
    theta = np.vstack([_load_chain(p).theta for p in args.chain])
    samples, summary = proj.project_chain(theta, sgp, args.mode, args.seed)
    m = args.baseline_samples or theta.shape[0]
    base, base_summary = proj.uncalibrated_baseline(design, sgp, m, args.seed + 1, mode=args.mode)
    save_vector(out / "projection.csv", {"response": samples})
    save_vector(out / "baseline.csv", {"response": base})
    _write_json(out / "projection.json", {
        "config": _config(args), "calibrated": summary, "baseline": base_summary,
        "hyper": sgp.hyper.to_dict(), "mean_const": sgp.mean_const})


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)

    ap = _Parser(prog="binarycal", description="Calibrate simulators against binary spatial data.")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=_positive_int, default=1)
    ap.add_argument("--out", default=".")
    ap.add_argument("--log-level", default="INFO")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synthesize", parents=[common], help="synthetic benchmark files")
    s.add_argument("--sill", type=float, default=1.5)
    s.add_argument("--range", type=float, default=0.03)
    s.add_argument("--nugget", type=float, default=1e-5)
    s.add_argument("--saturation-logit", type=float, default=syn.SyntheticConfig.saturation_logit)
    s.set_defaults(func=cmd_synthesize)

    def lpca_opts(p):
        p.add_argument("--ensemble", required=True)
        p.add_argument("--components", type=_positive_int, default=10)
        p.add_argument("--max-iter", type=_positive_int, default=2000)
        p.add_argument("--tol", type=float, default=1e-6)

    s = sub.add_parser("lpca", parents=[common], help="logistic principal components")
    lpca_opts(s)
    s.add_argument("--restarts", type=_positive_int, default=1)
    s.set_defaults(func=cmd_lpca)

    s = sub.add_parser("emulate", parents=[common], help="fit per-component GPs")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--lpca", required=True)
    s.add_argument("--restarts", type=_positive_int, default=5)
    s.set_defaults(func=cmd_emulate)

    s = sub.add_parser("cv", parents=[common], help="leave-fraction-out cross-validation")
    lpca_opts(s)
    s.add_argument("--folds", type=_fold_fraction, default=0.1)
    s.add_argument("--restarts", type=_positive_int, default=5)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("calibrate", parents=[common], help="MCMC over the calibration posterior")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--observation", required=True)
    s.add_argument("--emulator", required=True)
    s.add_argument("--cutoff", type=_cutoff, default=0.5)
    s.add_argument("--iterations", type=_positive_int, default=100_000)
    s.add_argument("--burn-in", type=int, default=20_000)
    s.add_argument("--thin", type=_positive_int, default=10)
    s.add_argument("--chains", type=_positive_int, default=1)
    s.add_argument("--grid", type=int, default=50)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("diagnose", parents=[common], help="MCSE, ESS and densities for chains")
    s.add_argument("--chain", nargs="+", required=True)
    s.add_argument("--grid", type=int, default=50)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("project", parents=[common], help="push a chain through a scalar emulator")
    s.add_argument("--design", required=True)
    s.add_argument("--response", required=True)
    s.add_argument("--column", default="response")
    s.add_argument("--chain", nargs="+", required=True)
    s.add_argument("--mode", choices=proj.MODES, default="sample-predictive")
    s.add_argument("--baseline-samples", type=int, default=0)
    s.add_argument("--restarts", type=_positive_int, default=5)
    s.add_argument("--no-nugget", action="store_true")
    s.set_defaults(func=cmd_project)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except ValidationError as exc:
        code, msg = "validation", str(exc)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        code, msg = "io", str(exc)
    except np.linalg.LinAlgError as exc:
        code, msg = "numerical", str(exc)
    except (ValueError, KeyError) as exc:
        code, msg = "input", str(exc)
    else:
        return 0
    print(f"error code={code} message={json.dumps(' '.join(msg.split()))}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
