"""Command-line entry point: ``crowdbounds {aggregate,bound,simulate,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from .bounds import (
    high_prob_bound,
    map_rule_for,
    mean_error_bounds,
    min_t1_for,
    plugin_bound,
    plugin_report,
)
from .csvio import (
    DataFileError,
    load_params,
    params_to_json,
    parse_gold,
    parse_labels,
    write_gold,
    write_labels,
    write_predictions,
)
from .em import EmOptions, em_fit, em_map_predict, posterior_ds
from .model import LabelMatrix, OneCoinParams, Prediction, SamplingDesign, error_rate
from .rules import (
    HyperplaneRule,
    bound_optimal_rule,
    iterative_wmv,
    majority_rule,
    majority_vote,
    one_step_wmv,
    predict,
)

log = logging.getLogger("crowdbounds")

AGG_METHODS = ("mv", "wmv", "oswmv", "iwmv", "em-map", "oracle-map")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _em_options(args) -> EmOptions:
    return EmOptions(max_iter=args.em_max_iter, tol=args.em_tol, estimate_prior=not args.fix_prior)


def _add_em_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("one_coin", "dawid_skene"), default="one_coin")
    p.add_argument("--em-max-iter", type=int, default=500)
    p.add_argument("--em-tol", type=float, default=1e-8)
    p.add_argument("--fix-prior", action="store_true", help="hold the class prior at --prior during EM")
    p.add_argument("--prior", type=float, default=0.5)


def _json_dump(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _hyperplane_from_params(method: str, raw_path, labels=None):
    """Rule plus parameters for the methods that need a params file."""
    params = load_params(raw_path, labels.worker_ids if labels is not None else None)
    raw = json.loads(Path(raw_path).read_text(encoding="utf-8"))
    if method == "wmv":
        if "v" not in raw:
            raise DataFileError(f"{raw_path}: wmv needs a weight vector 'v'")
        return HyperplaneRule(raw["v"], raw.get("a", 0.0)), params
    if method == "oracle-map":
        return map_rule_for(params), params
    if method == "bound-optimal":
        if not isinstance(params, OneCoinParams):
            raise DataFileError("bound-optimal needs one-coin accuracies 'w'")
        return bound_optimal_rule(params.accuracy), params
    return majority_rule(params.num_workers), params


def cmd_aggregate(args) -> int:
    labels = parse_labels(args.labels, args.zero_one)
    if args.method in ("oracle-map", "wmv") and not args.params:
        raise DataFileError(f"--method {args.method} requires --params")
    extra: dict = {}
    if args.method == "mv":
        pred = majority_vote(labels)
    elif args.method == "oswmv":
        pred, rule = one_step_wmv(labels)
        extra["weights"] = rule.weights.tolist()
    elif args.method == "iwmv":
        res = iterative_wmv(labels, max_iter=args.iwmv_max_iter)
        pred = res.prediction
        extra.update(iterations=res.iterations, converged=res.converged, weights=res.rule.weights.tolist())
    elif args.method == "em-map":
        pred, fitted, _ = em_map_predict(labels, args.model, _em_options(args), prior=args.prior)
        extra["params"] = params_to_json(fitted, labels.worker_ids)
    else:
        rule, params = _hyperplane_from_params(args.method, args.params, labels)
        if args.method == "oracle-map" and not isinstance(params, OneCoinParams):
            post = posterior_ds(labels, params)
            pred = Prediction(post.map_labels(),
                              frozenset(np.flatnonzero(labels.labels_per_item() == 0).tolist()))
        else:
            prior = params.prior if args.method == "oracle-map" else None
            pred = predict(rule, labels, prior=prior)
    write_predictions(pred, args.out, labels.item_ids)
    log.info("wrote %d predictions to %s", pred.num_items, args.out)
    if args.gold:
        gold = parse_gold(args.gold, labels.item_ids, args.zero_one)
        report = {"method": args.method, "error_rate": error_rate(pred, gold),
                  "num_gold": len(gold), "num_undetermined": len(pred.undetermined), **extra}
        metrics = args.metrics or str(Path(args.out).with_suffix(".error.json"))
        _json_dump(report, metrics)
    return 0


def cmd_bound(args) -> int:
    if args.labels:
        labels = parse_labels(args.labels, args.zero_one)
        if args.gold:
            report = plugin_report(labels, parse_gold(args.gold, labels.item_ids, args.zero_one), args.model)
            source = "gold"
        else:
            fit = em_fit(labels, args.model, _em_options(args), prior=args.prior)
            report = plugin_bound(fit.params)
            source = "em"
        out = {"method": "map-plugin", "reference": source, **report.to_dict()}
        num_items = labels.num_items
    elif args.params:
        rule, params = _hyperplane_from_params(args.method, args.params)
        report = mean_error_bounds(rule, params)
        out = {"method": args.method, **report.to_dict()}
        num_items = args.items
    else:
        raise DataFileError("bound needs --params, or --labels for a plugin bound")
    if args.eps is not None and num_items:
        try:
            out["high_prob_bound"] = high_prob_bound(args.eps, report.t1, num_items)
        except ValueError as exc:
            out["high_prob_bound"] = None
            out["high_prob_note"] = str(exc)
        if args.delta is not None:
            out["min_t1"] = min_t1_for(args.eps, args.delta, num_items)
    _json_dump(out, args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.accuracies:
        acc = _floats(args.accuracies)
        source = acc
        m = len(acc)
    else:
        source = mc.BetaAccuracy.from_mean(args.wbar, args.beta_b)
        m = args.workers
    gen = mc.CrowdGenerator(m, args.items, source, model=args.model, prior=args.prior,
                            sampling=SamplingDesign.constant(args.q), seed=args.seed,
                            balanced=args.balanced)
    crowd = mc.generate(gen)
    worker_ids = [f"w{i}" for i in range(m)]
    item_ids = [f"i{j}" for j in range(args.items)]
    labels = LabelMatrix(crowd.labels.z, worker_ids, item_ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_labels(labels, out / "labels.csv")
    write_gold(crowd.gold, out / "gold.csv", item_ids)
    _json_dump(params_to_json(crowd.params, worker_ids), out / "params.json")
    log.info("simulated %d labels into %s", labels.num_observations, out)
    return 0


def _grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + k * step, 10) for k in range(n))


def cmd_experiment(args) -> int:
    if args.which == "fig-a":
        grid = _grid(args.wbar_start or 0.02, args.wbar_stop or 0.98, args.wbar_step)
        cfg = mc.FigAConfig(num_workers=args.workers or 11, num_items=args.items or 300,
                            q=args.q if args.q is not None else 0.8, wbar_grid=grid,
                            reps=args.reps or 100, seed=args.seed, em_options=_em_options(args),
                            n_jobs=args.jobs)
        mc.experiment_fig_a(cfg, args.out)
    elif args.which == "fig-c":
        m = args.workers or 15
        if args.wbar_start is None:
            grid = mc.default_fig_c_grid(m, args.wbar_stop or 0.98, args.wbar_step)
        else:
            grid = _grid(args.wbar_start, args.wbar_stop or 0.98, args.wbar_step)
        cfg = mc.FigCConfig(num_workers=m, num_items=args.items or 3000,
                            q=args.q if args.q is not None else 0.8, wbar_grid=grid,
                            reps=args.reps or 20, seed=args.seed, n_jobs=args.jobs)
        mc.experiment_fig_c(cfg, args.out)
    else:
        if args.labels:
            if not args.gold:
                raise DataFileError("fig-b needs --gold alongside --labels")
            labels = parse_labels(args.labels, args.zero_one)
            gold = parse_gold(args.gold, labels.item_ids, args.zero_one)
        else:
            crowd = mc.generate(mc.rte_like_generator(args.seed))
            labels, gold = crowd.labels, crowd.gold
        x_grid = _floats(args.x_grid) if args.x_grid else _grid(0.05, 1.0, 0.05)
        mc.experiment_subsample(labels, gold, x_grid, reps=args.reps or 40, seed=args.seed,
                                sink=args.out, em_options=_em_options(args), n_jobs=args.jobs)
    log.info("wrote sweep to %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdbounds", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="aggregate crowd labels into predictions")
    p.add_argument("--labels", required=True)
    p.add_argument("--gold")
    p.add_argument("--params", help="parameter JSON (oracle-map, wmv)")
    p.add_argument("--method", choices=AGG_METHODS, default="mv")
    p.add_argument("--out", required=True, help="predictions CSV")
    p.add_argument("--metrics", help="error-rate JSON path (default: <out>.error.json)")
    p.add_argument("--zero-one", action="store_true", help="labels are 0/1 instead of -1/1")
    p.add_argument("--iwmv-max-iter", type=int, default=100)
    _add_em_flags(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("bound", help="mean error-rate bounds as JSON")
    p.add_argument("--method", choices=("mv", "wmv", "oracle-map", "bound-optimal"), default="oracle-map")
    p.add_argument("--params")
    p.add_argument("--labels", help="compute the MAP plugin bound from data instead")
    p.add_argument("--gold")
    p.add_argument("--items", type=int, default=None, help="N for the high-probability bound")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--out", default="-")
    p.add_argument("--zero-one", action="store_true")
    _add_em_flags(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="generate a synthetic crowd")
    p.add_argument("--workers", type=int, default=11)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--q", type=float, default=0.8)
    p.add_argument("--wbar", type=float, default=0.75, help="mean of the Beta(a, b) accuracy draw")
    p.add_argument("--beta-b", type=float, default=2.0)
    p.add_argument("--accuracies", help="explicit comma-separated accuracies (overrides --wbar)")
    p.add_argument("--model", choices=("one_coin", "dawid_skene"), default="one_coin")
    p.add_argument("--prior", type=float, default=0.5)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a simulation sweep, write CSV")
    p.add_argument("which", choices=("fig-a", "fig-b", "fig-c"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--items", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--wbar-start", type=float)
    p.add_argument("--wbar-stop", type=float)
    p.add_argument("--wbar-step", type=float, default=0.02)
    p.add_argument("--x-grid", help="comma-separated subsampling proportions (fig-b)")
    p.add_argument("--labels")
    p.add_argument("--gold")
    p.add_argument("--zero-one", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    _add_em_flags(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataFileError, ValueError, IndexError, OSError) as exc:
        print(f"crowdbounds: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
