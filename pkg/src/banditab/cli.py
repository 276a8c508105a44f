"""Command-line front end.

Subcommands: ``test-iid`` and ``test-dynamic`` run the permuted walk test on
CSV data and write a JSON report; ``simulate`` emits catalog datasets with a
ground-truth sidecar; ``power-study`` loops simulate-then-test into a results
table; ``bootstrap-env`` builds and samples the wild-bootstrap environment;
``dist`` evaluates the limiting-density and rejection-probability curves.

Exit codes: 0 success, 2 data error, 3 configuration error, 4 internal
numeric failure.  All randomness flows from ``--seed``; stream ids are fixed
per (command, replicate, purpose), so outputs are byte-reproducible for any
``--threads`` value.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DataError,
    InvalidArgumentError,
    NumericError,
    RngStream,
    load_iid_csv,
    load_panel_csv,
    write_iid_csv,
    write_panel_csv,
)
from .dist import BanditParams, bandit_pdf, tab_rejection_probability
from .drl import BehaviorPolicy, crossfit_dynamic, dynamics_from_coefficients
from .nuisance import FeatureMap, LearnerConfig, crossfit_predict
from .pseudo_iid import PseudoOutcomes, pseudo_from_predictions
from .sim import (
    STATE_NOISE_VAR,
    IidDgpSpec,
    MdpDgpSpec,
    build_bootstrap_env,
    gen_confounded_iid,
    gen_mdp,
    gen_randomized_iid,
    sample_bootstrap,
    true_ate_iid,
    true_ate_linear,
    true_ate_mdp,
)
from .study import iid_rejection_study, mdp_rejection_study
from .tab import p_tab, z_test

__all__ = ["main"]

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

# purpose ids for child streams (command, replicate, purpose); fixed forever
_S_DATA, _S_NUISANCE, _S_PTAB, _S_TAB, _S_COEF, _S_EMIT = 1, 2, 3, 4, 5, 6


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); config errors are exit 3 here
        raise _UsageError(message)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit_json(payload: dict, path: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_csv(path: str | None, header: list, rows: list) -> None:
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return v

    target = sys.stdout if path is None else open(path, "w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(target)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    finally:
        if path is not None:
            target.close()


def _load_data(loader, path):
    """Classify any failure while reading/validating an input file as a data error."""
    try:
        return loader(path)
    except DataError:
        raise
    except (InvalidArgumentError, OSError) as exc:
        raise DataError(str(exc)) from exc


def _feature_map(name: str) -> FeatureMap:
    return FeatureMap(name)


def _add_common_test_flags(sub, default_folds: int):
    sub.add_argument("--input", required=True, help="input CSV path")
    sub.add_argument("--output", default=None, help="report JSON path (default: stdout)")
    sub.add_argument("--folds", type=int, default=default_folds, help="cross-fitting folds")
    sub.add_argument("--permutations", type=int, default=100, help="permutation replicates")
    sub.add_argument("--combine", choices=("cauchy", "quantile"), default="cauchy")
    sub.add_argument("--gamma", type=float, default=0.5, help="quantile-combination level")
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--basis", choices=("linear", "poly2"), default="poly2")


def _base_report(args, command: str, setting: str, combined, zp: float,
                 pseudo: PseudoOutcomes, horizon: int | None, diagnostics: dict,
                 config: dict) -> dict:
    return {
        "banditab_version": __version__,
        "command": command,
        "method": "p_tab",
        "setting": setting,
        "alpha": args.alpha,
        "combined_p": combined.combined_p,
        "reject": bool(combined.combined_p < args.alpha),
        "per_perm_p": list(combined.per_perm_p),
        "n_perm": combined.n_perm,
        "combine": combined.method,
        "gamma": combined.gamma,
        "z_test_p": zp,
        "statistics": {
            "n": pseudo.n,
            "mu_bar": pseudo.mu_bar,
            "sigma_hat": pseudo.sigma_hat,
            "T": horizon,
        },
        "seed": args.seed,
        "diagnostics": diagnostics,
        "config": config,
    }


def _cmd_test_iid(args) -> int:
    if args.folds < 2:
        raise InvalidArgumentError("K must be >= 2")
    data = _load_data(load_iid_csv, args.input)
    config = LearnerConfig(
        outcome_map=_feature_map(args.basis),
        propensity_map=_feature_map(args.basis),
        clip=args.clip,
        known_propensity=args.pa,
    )
    rng = RngStream(args.seed)
    cross = crossfit_predict(data, args.folds, config, rng.child(_S_NUISANCE))
    pseudo = pseudo_from_predictions(data, cross.m0, cross.m1, cross.b1)
    combined = p_tab(pseudo, args.permutations, rng.child(_S_PTAB), args.combine, args.gamma)
    zp = z_test(pseudo)
    report = _base_report(
        args, "test-iid", "iid", combined, zp, pseudo, None,
        {
            "propensity_clip_rate": cross.clip_rate,
            "irls_converged": list(cross.irls_converged),
            "omega_clip_rate": None,
            "dynamics_regularized": None,
        },
        {
            "input": args.input,
            "folds": args.folds,
            "permutations": args.permutations,
            "combine": args.combine,
            "gamma": args.gamma,
            "learner": args.learner,
            "basis": args.basis,
            "clip": args.clip,
            "pa": args.pa,
        },
    )
    _emit_json(report, args.output)
    return EXIT_OK


def _behavior_from_flag(value: str, clip: float, horizon: int) -> BehaviorPolicy:
    if value == "switchback":
        return BehaviorPolicy("switchback", clip=clip)
    if value in ("estimate", "estimated"):
        return BehaviorPolicy("estimated", clip=clip)
    # anything else is a path to a JSON list of per-step treatment probabilities
    try:
        probs = json.loads(Path(value).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidArgumentError(f"behavior probabilities file unreadable: {exc}") from exc
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (horizon,):
        raise InvalidArgumentError(f"behavior probabilities must list T={horizon} values")
    return BehaviorPolicy("known", probs=probs, clip=clip)


def _oracle_dynamics(path: str):
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidArgumentError(f"recorded environment file unreadable: {exc}") from exc
    spec = MdpDgpSpec.from_dict(payload["dgp"] if "dgp" in payload else payload)
    return dynamics_from_coefficients(spec.coefficients, STATE_NOISE_VAR)


def _cmd_test_dynamic(args) -> int:
    if args.folds < 2:
        raise InvalidArgumentError("K must be >= 2")
    panel = _load_data(load_panel_csv, args.input)
    behavior = _behavior_from_flag(args.behavior, args.clip, panel.horizon)
    dynamics = None
    if args.ratio_backend == "oracle":
        if args.dgp is None:
            raise InvalidArgumentError("oracle ratio backend needs --dgp with the recorded environment")
        dynamics = _oracle_dynamics(args.dgp)
    rng = RngStream(args.seed)
    cross = crossfit_dynamic(panel, args.folds, _feature_map(args.basis), behavior,
                             args.ratio_backend, rng.child(_S_NUISANCE),
                             dynamics=dynamics, omega_max=args.omega_max)
    pseudo = PseudoOutcomes.from_mu(cross.mu_hat)
    combined = p_tab(pseudo, args.permutations, rng.child(_S_PTAB), args.combine, args.gamma)
    zp = z_test(pseudo)
    report = _base_report(
        args, "test-dynamic", "dynamic", combined, zp, pseudo, panel.horizon,
        {
            "propensity_clip_rate": None,
            "irls_converged": None,
            "omega_clip_rate": cross.omega_clip_rate,
            "dynamics_regularized": cross.dynamics_regularized,
        },
        {
            "input": args.input,
            "folds": args.folds,
            "permutations": args.permutations,
            "combine": args.combine,
            "gamma": args.gamma,
            "basis": args.basis,
            "behavior": args.behavior,
            "ratio_backend": args.ratio_backend,
            "omega_max": args.omega_max,
            "clip": args.clip,
            "dgp": args.dgp,
        },
    )
    _emit_json(report, args.output)
    return EXIT_OK


def _iid_spec_from_args(args) -> IidDgpSpec:
    if args.hypothesis is None:
        raise InvalidArgumentError("--hypothesis is required for i.i.d. environments")
    if args.dgp == "rand-iid":
        if args.pa is None or args.sigma is None:
            raise InvalidArgumentError("rand-iid needs --pa and --sigma")
        return IidDgpSpec("randomized", args.hypothesis, args.n, p_a=args.pa, sigma0=args.sigma)
    return IidDgpSpec("confounded", args.hypothesis, args.n, sigma0=args.sigma,
                      df=args.df, d=args.dim)


def _mdp_spec_from_args(args, rng: RngStream) -> MdpDgpSpec:
    if args.delta is None:
        raise InvalidArgumentError("MDP environments need --delta")
    kind = "linear" if args.dgp == "linear-mdp" else "nonlinear"
    return MdpDgpSpec.draw(kind, args.n, args.delta, rng.child(_S_COEF), T=args.T)


def _cmd_simulate(args) -> int:
    rng = RngStream(args.seed)
    sidecar = {
        "banditab_version": __version__,
        "command": "simulate",
        "seed": args.seed,
        "dgp_flag": args.dgp,
    }
    if args.output is None:
        raise InvalidArgumentError("simulate needs --output for the dataset CSV")
    out = Path(args.output)
    if args.dgp in ("rand-iid", "conf-iid"):
        spec = _iid_spec_from_args(args)
        gen = gen_randomized_iid if spec.family == "randomized" else gen_confounded_iid
        data, ate = gen(spec, rng.child(_S_DATA))
        write_iid_csv(data, out)
        _, mc_se = true_ate_iid(spec)
        sidecar.update({"dgp": spec.to_dict(), "true_ate": ate, "true_ate_mc_se": mc_se})
    else:
        spec = _mdp_spec_from_args(args, rng)
        panel = gen_mdp(spec, rng.child(_S_DATA))
        write_panel_csv(panel, out)
        if spec.kind == "linear":
            ate, mc_se = true_ate_linear(spec.coefficients), 0.0
        else:
            ate, mc_se = true_ate_mdp(spec)
        sidecar.update({"dgp": spec.to_dict(), "true_ate": ate, "true_ate_mc_se": mc_se})
    _emit_json(sidecar, str(out.with_suffix(".json")))
    return EXIT_OK


def _cmd_power_study(args) -> int:
    if args.reps < 1:
        raise InvalidArgumentError("need at least one replication")
    rng = RngStream(args.seed)
    if args.folds is None:
        args.folds = 5 if args.dgp in ("rand-iid", "conf-iid") else 2
    if args.dgp in ("rand-iid", "conf-iid"):
        spec = _iid_spec_from_args(args)
        config = LearnerConfig(outcome_map=_feature_map(args.basis),
                               propensity_map=_feature_map(args.basis),
                               clip=args.clip, known_propensity=None)
        result = iid_rejection_study(spec, args.reps, args.seed, alpha=args.alpha,
                                     n_perm=args.permutations, n_folds=args.folds,
                                     config=config, combiner=args.combine,
                                     gamma=args.gamma, threads=args.threads)
        ate, _ = true_ate_iid(spec)
        noise = f"sigma={args.sigma}" if args.sigma is not None else f"df={args.df}"
        setting = f"{args.dgp}:{args.hypothesis}:{noise}" + (
            f":pa={args.pa}" if spec.family == "randomized" else f":d={spec.d}")
        delta_col = ate  # i.i.d. rows report the true effect in the strength column
        methods = ("p_tab", "tab", "dml")
    else:
        spec = _mdp_spec_from_args(args, rng)
        behavior = BehaviorPolicy("switchback", clip=args.clip) if args.behavior == "switchback" \
            else BehaviorPolicy("estimated", clip=args.clip)
        dynamics = dynamics_from_coefficients(spec.coefficients, STATE_NOISE_VAR) \
            if args.ratio_backend == "oracle" else None
        result = mdp_rejection_study(spec, args.reps, args.seed, alpha=args.alpha,
                                     n_perm=args.permutations, n_folds=args.folds,
                                     basis=_feature_map(args.basis), behavior=behavior,
                                     backend=args.ratio_backend, dynamics=dynamics,
                                     omega_max=args.omega_max, combiner=args.combine,
                                     gamma=args.gamma, threads=args.threads)
        setting = f"{args.dgp}:T={spec.T}"
        delta_col = spec.delta
        methods = ("p_tab", "tab", "drl")
    rows = [
        [m.replace("p_tab", "p-tab"), setting, float(delta_col), args.n,
         result.rates[m], result.ses[m], args.reps]
        for m in methods
    ]
    _write_csv(args.output, ["method", "setting", "delta", "n", "rejection_rate", "se", "reps"], rows)
    return EXIT_OK


def _cmd_bootstrap_env(args) -> int:
    panel = _load_data(load_panel_csv, args.input)
    env = build_bootstrap_env(panel, args.improvement)
    if args.output is None:
        raise InvalidArgumentError("bootstrap-env needs --output for the environment JSON")
    out = Path(args.output)
    payload = {
        "banditab_version": __version__,
        "command": "bootstrap-env",
        "seed": args.seed,
        "true_ate": true_ate_linear(env.coefficients()),
        "env": env.to_dict(),
    }
    _emit_json(payload, str(out))
    if args.emit is not None:
        n_days, reps = args.emit
        if n_days < 1 or reps < 1:
            raise InvalidArgumentError("--emit needs positive day and replicate counts")
        rng = RngStream(args.seed)
        for r in range(reps):
            panel_r = sample_bootstrap(env, n_days, rng.child(_S_EMIT, r))
            write_panel_csv(panel_r, out.with_name(f"{out.stem}_panel{r + 1}.csv"))
    return EXIT_OK


def _cmd_dist(args) -> int:
    if args.curve == "pdf":
        if not args.ymin < args.ymax or args.points < 2:
            raise InvalidArgumentError("need ymin < ymax and at least two grid points")
        params = BanditParams(args.kappa, args.sigma0)
        grid = np.linspace(args.ymin, args.ymax, args.points)
        vals = bandit_pdf(grid, params)
        _write_csv(args.output, ["y", "pdf"], [[float(g), float(v)] for g, v in zip(grid, vals)])
    else:
        if not args.kmin < args.kmax or args.points < 2:
            raise InvalidArgumentError("need kmin < kmax and at least two grid points")
        grid = np.linspace(args.kmin, args.kmax, args.points)
        rows = []
        for k in grid:
            p = tab_rejection_probability(BanditParams(float(k), args.sigma0), args.alpha)
            rows.append([float(k), p])
        _write_csv(args.output, ["kappa", "power"], rows)
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="banditab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"banditab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    t_iid = subs.add_parser("test-iid", parents=[], description="Permuted walk test on an i.i.d. CSV dataset.")
    _add_common_test_flags(t_iid, default_folds=5)
    t_iid.add_argument("--learner", choices=("ridge",), default="ridge")
    t_iid.add_argument("--clip", type=float, default=0.01, help="propensity clip bound")
    t_iid.add_argument("--pa", type=float, default=None,
                       help="known randomization probability (skips the propensity fit)")
    t_iid.set_defaults(run=_cmd_test_iid)

    t_dyn = subs.add_parser("test-dynamic", description="Permuted walk test on a panel CSV dataset.")
    _add_common_test_flags(t_dyn, default_folds=2)
    t_dyn.add_argument("--behavior", default="switchback",
                       help="switchback, estimate, or a JSON file of per-step treatment probabilities")
    t_dyn.add_argument("--ratio-backend", choices=("model_gaussian", "oracle", "plugin_uniform"),
                       default="model_gaussian", dest="ratio_backend")
    t_dyn.add_argument("--omega-max", type=float, default=20.0, dest="omega_max")
    t_dyn.add_argument("--clip", type=float, default=0.01)
    t_dyn.add_argument("--dgp", default=None,
                       help="recorded environment JSON (required by the oracle backend)")
    t_dyn.set_defaults(run=_cmd_test_dynamic)

    sim = subs.add_parser("simulate", description="Generate a catalog dataset plus ground-truth sidecar.")
    sim.add_argument("--dgp", required=True, choices=("rand-iid", "conf-iid", "linear-mdp", "nonlinear-mdp"))
    sim.add_argument("--hypothesis", default=None)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--T", type=int, default=24)
    sim.add_argument("--delta", type=float, default=None)
    sim.add_argument("--sigma", type=float, default=None)
    sim.add_argument("--df", type=int, default=None)
    sim.add_argument("--pa", type=float, default=None)
    sim.add_argument("--dim", type=int, default=None, help="covariate dimension (confounded family)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--output", required=True, help="dataset CSV path; sidecar gets .json")
    sim.set_defaults(run=_cmd_simulate)

    pw = subs.add_parser("power-study", description="Monte Carlo rejection rates for one environment.")
    pw.add_argument("--dgp", required=True, choices=("rand-iid", "conf-iid", "linear-mdp", "nonlinear-mdp"))
    pw.add_argument("--hypothesis", default=None)
    pw.add_argument("--n", type=int, required=True)
    pw.add_argument("--T", type=int, default=24)
    pw.add_argument("--delta", type=float, default=None)
    pw.add_argument("--sigma", type=float, default=None)
    pw.add_argument("--df", type=int, default=None)
    pw.add_argument("--pa", type=float, default=None)
    pw.add_argument("--dim", type=int, default=None)
    pw.add_argument("--reps", type=int, required=True)
    pw.add_argument("--alpha", type=float, default=0.05)
    pw.add_argument("--permutations", type=int, default=100)
    pw.add_argument("--folds", type=int, default=None)
    pw.add_argument("--combine", choices=("cauchy", "quantile"), default="cauchy")
    pw.add_argument("--gamma", type=float, default=0.5)
    pw.add_argument("--basis", choices=("linear", "poly2"), default="poly2")
    pw.add_argument("--clip", type=float, default=0.01)
    pw.add_argument("--omega-max", type=float, default=20.0, dest="omega_max")
    pw.add_argument("--behavior", choices=("switchback", "estimate"), default="switchback")
    pw.add_argument("--ratio-backend", choices=("model_gaussian", "oracle", "plugin_uniform"),
                    default="model_gaussian", dest="ratio_backend")
    pw.add_argument("--seed", type=int, default=0)
    pw.add_argument("--threads", type=int, default=1)
    pw.add_argument("--output", default=None, help="results CSV path (default: stdout)")
    pw.set_defaults(run=_cmd_power_study)

    be = subs.add_parser("bootstrap-env", description="Build (and optionally sample) a bootstrap environment.")
    be.add_argument("--input", required=True, help="single-policy source panel CSV")
    be.add_argument("--lambda", type=float, required=True, dest="improvement",
                    help="target improvement fraction")
    be.add_argument("--output", required=True, help="environment JSON path")
    be.add_argument("--emit", type=int, nargs=2, metavar=("N", "REPS"), default=None,
                    help="also sample REPS panels of N days")
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--threads", type=int, default=1)
    be.set_defaults(run=_cmd_bootstrap_env)

    ds = subs.add_parser("dist", description="Evaluate the limiting density or the rejection curve.")
    ds.add_argument("--curve", choices=("pdf", "power"), required=True)
    ds.add_argument("--kappa", type=float, default=0.0)
    ds.add_argument("--sigma0", type=float, default=1.0)
    ds.add_argument("--alpha", type=float, default=0.05)
    ds.add_argument("--ymin", type=float, default=-6.0)
    ds.add_argument("--ymax", type=float, default=6.0)
    ds.add_argument("--kmin", type=float, default=-3.0)
    ds.add_argument("--kmax", type=float, default=5.0)
    ds.add_argument("--points", type=int, default=241)
    ds.add_argument("--seed", type=int, default=0)
    ds.add_argument("--threads", type=int, default=1)
    ds.add_argument("--output", default=None, help="curve CSV path (default: stdout)")
    ds.set_defaults(run=_cmd_dist)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except _UsageError as exc:
        print(f"banditab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        print(f"banditab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"banditab: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"banditab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
