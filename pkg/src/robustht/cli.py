"""Command-line surface: simulate, predict, attack-surface, nn-class,
sigma-search and built-in figure reproduction.

Exit codes: 0 success, 1 configuration/validation failure, 2 runtime
failure. Failures also emit one machine-readable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import configs
from .analysis import (
    METHOD_CLT_EXACT,
    METHOD_MONTE_CARLO,
    METHOD_Q_OF_SNR,
    clt_error,
    cost_difference_moments,
    error_from_snr,
    moment_study,
    sigma_for_target_error,
    snr_glrt,
    snr_minimax,
)
from .attacks import brute_force_attack_oracle, nn_class_glrt, nn_class_min_distance
from .classifiers import ClassifierKind, build_classifier
from .engine import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    format_row,
    run_experiment,
)
from .model import AttackMode, HypothesisModel, TwoLevelProfile

_EXIT_OK = 0
_EXIT_CONFIG = 1
_EXIT_RUNTIME = 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else _EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        _emit_error("validation", exc)
        return _EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _emit_error("runtime", exc)
        return _EXIT_RUNTIME


def _emit_error(kind: str, exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustht",
        description="Gaussian hypothesis testing under l-infinity adversarial attacks: "
        "simulation, prediction and attack exploration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="base RNG seed")
        p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
        p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=1, help="worker threads")

    p = sub.add_parser("simulate", help="run a JSON experiment config")
    p.add_argument("config", type=Path)
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("predict", help="analytic error estimates, no sampling")
    _profile_flags(p)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--kappa", type=_float_list, default=[1.0],
                   help="comma-separated attack strengths")
    common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("attack-surface", help="brute-force error surface (d <= 3)")
    p.add_argument("--model", required=True,
                   help="model JSON file or builtin name (ternary-2d, ternary-20d)")
    p.add_argument("--classifier", choices=[k.value for k in ClassifierKind],
                   default=ClassifierKind.GLRT.value)
    p.add_argument("--true-class", type=int, default=0)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--grid", type=int, default=41, help="grid points per axis")
    common(p)
    p.set_defaults(func=_cmd_surface)

    p = sub.add_parser("nn-class", help="nearest-neighbor class tables")
    p.add_argument("--model", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--kappa", type=float, default=None,
                   help="employed strength (defaults to eps)")
    common(p)
    p.set_defaults(func=_cmd_nn_class)

    p = sub.add_parser("sigma-search", help="noise level hitting a target error")
    _profile_flags(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--method", choices=(METHOD_CLT_EXACT, METHOD_MONTE_CARLO),
                   default=METHOD_CLT_EXACT)
    common(p)
    p.set_defaults(func=_cmd_sigma_search)

    p = sub.add_parser("reproduce", help="built-in figure recipes")
    p.add_argument("figure", choices=sorted(configs.FIGURES))
    common(p)
    p.set_defaults(func=_cmd_reproduce)

    return parser


def _profile_flags(p) -> None:
    p.add_argument("--d", type=int, required=True, help="number of coordinates")
    p.add_argument("--p", type=float, required=True, help="fraction of strong coordinates")
    p.add_argument("--a", type=float, required=True, help="strong mean, in units of eps")
    p.add_argument("--b", type=float, required=True, help="weak mean, in units of eps")
    p.add_argument("--eps", type=float, required=True, help="designed attack budget")


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v != ""]


@contextmanager
def _open_out(args):
    if args.out is None:
        yield sys.stdout
    else:
        with open(args.out, "w") as fh:
            yield fh


def _write_result(result: ExperimentResult, args) -> None:
    with _open_out(args) as fh:
        if args.format == "json":
            fh.write(result.to_json() + "\n")
        else:
            result.write_csv(fh)
    if args.out is not None:
        _write_sidecar(args.out, result.metadata)


def _write_sidecar(out: Path, metadata: dict) -> None:
    side = out.with_suffix(out.suffix + ".meta.json")
    side.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def _load_model(spec: str) -> HypothesisModel:
    path = Path(spec)
    if path.exists():
        raw = json.loads(path.read_text())
        return HypothesisModel(
            means=np.asarray(raw["means"], dtype=float),
            sigma=float(raw["sigma"]),
            priors=np.asarray(raw["priors"], dtype=float) if "priors" in raw else None,
        )
    return configs.builtin_model(spec)


def _warn_nonuniform(model: HypothesisModel) -> None:
    if not model.has_uniform_priors():
        sys.stderr.write(
            "warning: non-uniform priors; the decision rules ignore priors and "
            "the reference scenarios assume equi-probable classes\n"
        )


def _cmd_simulate(args) -> int:
    raw = json.loads(args.config.read_text())
    if args.seed != 0:
        raw["seed"] = args.seed
    if args.trials is not None:
        raw["trials"] = args.trials
    config = ExperimentConfig.from_dict(raw)
    _warn_nonuniform(config.resolved_model())
    _run_and_write([config], args, metadata_shape="single")
    return _EXIT_OK


def _run_and_write(configs_list, args, metadata_shape="single") -> None:
    """Run experiment configs, streaming CSV rows to disk as they finish."""
    stream_csv = args.format == "csv" and args.out is not None
    results = []
    if stream_csv:
        with open(args.out, "w") as fh:
            fh.write(CSV_HEADER + "\n")

            def sink(row):
                fh.write(format_row(row) + "\n")
                fh.flush()

            for config in configs_list:
                results.append(run_experiment(config, threads=args.threads,
                                              row_sink=sink))
    else:
        for config in configs_list:
            results.append(run_experiment(config, threads=args.threads))
    if metadata_shape == "single":
        metadata = results[0].metadata
    else:
        metadata = {"configs": [r.metadata for r in results], "seed": args.seed}
    combined = ExperimentResult(
        rows=[row for r in results for row in r.rows], metadata=metadata
    )
    if stream_csv:
        _write_sidecar(args.out, metadata)
    else:
        _write_result(combined, args)


def _cmd_predict(args) -> int:
    profile = TwoLevelProfile(d=args.d, p=args.p, a=args.a, b=args.b, eps=args.eps)
    model = profile.to_model(args.sigma)
    rows = []
    for kappa in args.kappa:
        snr_mm = snr_minimax(args.d, args.p, args.a, kappa / args.eps if args.eps else 0.0,
                             args.eps, args.sigma)
        rows.append(_predict_row(kappa, ClassifierKind.MINIMAX_LINEAR,
                                 error_from_snr(snr_mm), METHOD_Q_OF_SNR, args.seed))
        if 0 <= kappa <= args.eps:
            exact = clt_error(model, args.eps, kappa)
            lower = clt_error(model, args.eps, kappa, use_lower_bound=True)
            ma = cost_difference_moments(args.a * args.eps, args.eps, kappa, args.sigma)
            mb = cost_difference_moments(args.b * args.eps, args.eps, kappa, args.sigma)
            rows.append(_predict_row(kappa, ClassifierKind.GLRT, exact.value,
                                     exact.method, args.seed))
            rows.append(_predict_row(kappa, ClassifierKind.GLRT, lower.value,
                                     lower.method, args.seed))
            rows.append(_predict_row(kappa, ClassifierKind.GLRT,
                                     error_from_snr(snr_glrt(args.d, args.p, ma, mb))
                                     if ma.mean * args.p + mb.mean * (1 - args.p) >= 0 else 0.5,
                                     METHOD_Q_OF_SNR, args.seed))
    result = ExperimentResult(
        rows=rows,
        metadata={"profile": {"d": args.d, "p": args.p, "a": args.a, "b": args.b,
                              "eps": args.eps}, "sigma": args.sigma, "seed": args.seed},
    )
    _write_result(result, args)
    return _EXIT_OK


def _predict_row(kappa, kind, error, method, seed) -> dict:
    return {
        "sweep_axis": "kappa",
        "sweep_value": kappa,
        "classifier": kind.value,
        "attack_mode": AttackMode.NOISE_AGNOSTIC_HEURISTIC.value,
        "kappa": kappa,
        "error": float(error),
        "ci": None,
        "reject_rate": None,
        "method": method,
        "seed": seed,
    }


def _cmd_surface(args) -> int:
    model = _load_model(args.model)
    _warn_nonuniform(model)
    classifier = build_classifier(ClassifierKind(args.classifier), model, args.eps)
    surface = brute_force_attack_oracle(
        model, classifier, args.true_class, args.eps,
        grid_points_per_axis=args.grid,
        trials=args.trials or 10_000,
        seed=args.seed,
        threads=args.threads,
    )
    _write_surface(surface, model, args)
    return _EXIT_OK


def _write_surface(surface, model, args) -> None:
    d = model.dim
    header = ",".join(f"e{i + 1}" for i in range(d)) + ",error"
    with _open_out(args) as fh:
        if args.format == "json":
            payload = {
                "metadata": _surface_metadata(surface, model),
                "rows": [
                    {"attack": e.tolist(), "error": err} for e, err in surface.iter_rows()
                ],
            }
            fh.write(json.dumps(payload, indent=2) + "\n")
        else:
            fh.write(header + "\n")
            for e, err in surface.iter_rows():
                cells = [format(v, ".10g") for v in e] + [format(err, ".10g")]
                fh.write(",".join(cells) + "\n")
    if args.out is not None:
        _write_sidecar(args.out, _surface_metadata(surface, model))


def _surface_metadata(surface, model) -> dict:
    return {
        "model": {
            "means": model.means.tolist(),
            "sigma": model.sigma,
            "priors": model.priors.tolist(),
        },
        "eps": surface.eps,
        "true_class": surface.true_class,
        "trials": surface.trials,
        "seed": surface.seed,
        "argmax_attack": surface.argmax_attack.tolist(),
        "max_error": surface.max_error,
    }


def _cmd_nn_class(args) -> int:
    model = _load_model(args.model)
    _warn_nonuniform(model)
    kappa = args.eps if args.kappa is None else args.kappa
    lines = ["classifier,true_class,nn_class,score,degenerate"]
    for j in range(model.num_classes):
        sel = nn_class_min_distance(model, j, kappa)
        lines.append(
            f"min-distance,{j},{sel.target},{format(sel.scores[sel.target], '.10g')},false"
        )
        sel = nn_class_glrt(model, j, args.eps, kappa)
        lines.append(
            f"glrt,{j},{sel.target},{format(sel.scores[sel.target], '.10g')},"
            f"{'true' if sel.degenerate else 'false'}"
        )
    with _open_out(args) as fh:
        fh.write("\n".join(lines) + "\n")
    return _EXIT_OK


def _cmd_sigma_search(args) -> int:
    profile = TwoLevelProfile(d=args.d, p=args.p, a=args.a, b=args.b, eps=args.eps)
    sigma = sigma_for_target_error(
        profile, args.kappa, args.target,
        method=args.method,
        trials=args.trials or 200_000,
        seed=args.seed,
    )
    with _open_out(args) as fh:
        fh.write(json.dumps({"sigma": sigma, "sigma_sq": sigma * sigma,
                             "target_error": args.target, "method": args.method}) + "\n")
    return _EXIT_OK


def _cmd_reproduce(args) -> int:
    recipe = configs.figure_recipe(args.figure, trials=args.trials, seed=args.seed)
    if isinstance(recipe, configs.MomentStudyRecipe):
        rows = moment_study(recipe.mus, recipe.eps, recipe.kappa, recipe.sigma,
                            trials=recipe.trials, seed=recipe.seed)
        _write_moment_rows(rows, recipe, args)
        return _EXIT_OK
    if isinstance(recipe, configs.SurfaceRecipe):
        classifier = build_classifier(recipe.classifier, recipe.model, recipe.eps)
        surface = brute_force_attack_oracle(
            recipe.model, classifier, recipe.true_class, recipe.eps,
            grid_points_per_axis=recipe.grid_points_per_axis,
            trials=recipe.trials, seed=recipe.seed, threads=args.threads,
        )
        _write_surface(surface, recipe.model, args)
        return _EXIT_OK
    recipes = recipe if isinstance(recipe, list) else [recipe]
    _run_and_write(recipes, args, metadata_shape="multi")
    return _EXIT_OK


def _write_moment_rows(rows, recipe, args) -> None:
    header = ("mu,c_mean_exact,c_var_exact,c_mean_mc,c_var_mc,"
              "c_mean_se,c_var_se,y_mean,y_var")
    metadata = {
        "eps": recipe.eps, "kappa": recipe.kappa, "sigma": recipe.sigma,
        "trials": recipe.trials, "seed": recipe.seed,
    }
    with _open_out(args) as fh:
        if args.format == "json":
            fh.write(json.dumps({"metadata": metadata, "rows": rows}, indent=2) + "\n")
        else:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(format(row[k], ".10g") for k in header.split(",")) + "\n")
    if args.out is not None:
        _write_sidecar(args.out, metadata)


if __name__ == "__main__":
    sys.exit(main())
