"""Command-line front door.

Every command is deterministic for a fixed ``--seed`` and config: primary
outputs (instances, feature CSVs, sample JSONs, design JSONs, result CSVs,
LP files) are byte-identical across re-runs.  Wall-clock data lands in the
sidecar ``*.manifest.json`` written next to each primary output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .bounds import BoundParams, knn_bound, reg_bound
from .embedding import DesignCostEmbedding, FollowerFeatures
from .experiments import (
    EXP1_HEADER,
    EXP2_HEADER,
    EXP2_STABILITY_HEADER,
    PROFILE_HEADER,
    PROFILE_TIMING_HEADER,
    ExperimentConfig,
    RunRecord,
    emit_plotdata,
    load_config,
    run_experiment1,
    run_experiment2,
    run_profile,
    sample_size,
    version_string,
    write_csv,
)
from .milp import export_milp, export_warm_start, import_solution
from .models import KnnRegressor, fit_linear, l1_loss, mean_absolute_error, tsp_features
from .network import GridParams, generate_synthetic, load_instance, save_instance
from .objectives import ObjectiveSpec
from .routing import Design, TravelTimeEvaluator, accessibility, get_impedance
from .sampling import Sample, make_sample
from .search import algorithm_reg, local_search_solve


def _write_manifest(primary_path, command, args, wall_time, outputs):
    record = RunRecord(
        command=command,
        config_hash="",
        version=version_string(),
        seeds=(getattr(args, "seed", 0),),
        wall_time=wall_time,
        outputs=outputs,
    )
    record.write(str(primary_path) + ".manifest.json")


def _load_design(path) -> Design:
    with open(path, "r", encoding="utf-8") as fh:
        return Design.from_json(fh.read())


def _load_sample(path) -> Sample:
    with open(path, "r", encoding="utf-8") as fh:
        return Sample.from_json(fh.read())


def _load_features(path) -> FollowerFeatures:
    return FollowerFeatures.load_csv(path)


def cmd_gen(args):
    params = GridParams(
        grid_size=args.grid,
        minor_per_segment=args.minor,
        signal_prob=args.signal_prob,
        n_centroids=args.centroids,
        connect_prob=args.connect_prob,
        od_cutoff=args.cutoff,
    )
    network = generate_synthetic(args.seed, params)
    save_instance(network, args.out)
    print(
        f"{network.name}: {network.n_nodes} nodes, {network.n_edges} edges, "
        f"{network.n_projects} projects, {network.n_od_pairs} OD pairs -> {args.out}"
    )
    return [args.out]


def cmd_eval(args):
    network = load_instance(args.instance)
    design = _load_design(args.design)
    imp = get_impedance(args.impedance)
    evaluator = TravelTimeEvaluator(network, imp)
    tau = evaluator.od_times(design)
    acc = accessibility(tau, imp)
    rows = [
        {
            "od_id": int(od.id),
            "origin": int(od.origin),
            "destination": int(od.destination),
            "weight": float(od.weight),
            "travel_time": float(tau[i]),
            "accessibility": float(acc[i]),
        }
        for i, od in enumerate(network.od_pairs)
    ]
    write_csv(args.out, ["od_id", "origin", "destination", "weight", "travel_time", "accessibility"], rows)
    total = float(np.sum(network.od_weight * acc))
    print(f"total accessibility: {total!r}")
    return [args.out]


def cmd_embed(args):
    network = load_instance(args.instance)
    embedder = DesignCostEmbedding(
        n_sim=args.nsim,
        dim=args.dim,
        max_projects=args.max_projects,
        max_nodes=args.max_nodes,
        n_walks=args.walks,
        walk_length=args.walk_length,
        window=args.window,
        negatives=args.negatives,
        epochs=args.epochs,
        learning_rate=args.lr,
        impedance=args.impedance,
        normalize=not args.no_normalize,
        seed=args.seed,
    )
    features = embedder.fit_transform(network)
    features.save_csv(args.out)
    n_unembedded = int(features.unembedded.sum())
    print(f"embedded {features.n_followers - n_unembedded}/{features.n_followers} followers -> {args.out}")
    return [args.out]


def cmd_sample(args):
    features = _load_features(args.features)
    kwargs = {}
    if args.method == "med":
        kwargs = {"n_iteration": args.iterations, "n_swap": args.swaps}
    elif args.method == "cen":
        kwargs = {"n_repeat": args.repeats}
    p = args.p if args.p >= 1 else sample_size(args.p, features.n_followers)
    sample = make_sample(args.method, features, int(p), k=args.k, seed=args.seed, **kwargs)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(sample.to_json() + "\n")
    print(f"{args.method} sample of {sample.p} followers (objective {sample.objective!r}) -> {args.out}")
    return [args.out]


def cmd_fit(args):
    network = load_instance(args.instance)
    features = _load_features(args.features)
    design = _load_design(args.design)
    targets = TravelTimeEvaluator(network, args.impedance).od_accessibility(design)
    values = features.values
    if args.sample:
        sample = _load_sample(args.sample)
        train = sample.follower_ids
        test = np.setdiff1d(np.flatnonzero(~features.unembedded), train)
    else:
        train = np.flatnonzero(~features.unembedded)
        test = train
    if args.model == "knn":
        model = KnnRegressor(k=args.k).fit(values[train], targets[train])
        payload = {"model": "knn", "k": args.k}
    else:
        model = fit_linear(values[train], targets[train], args.model, alpha=args.alpha)
        payload = {
            "model": args.model,
            "alpha": args.alpha,
            "coef": [float(c) for c in model.coef_],
            "intercept": float(model.intercept_),
        }
    payload["train_mae"] = mean_absolute_error(targets[train], model.predict(values[train]))
    payload["test_mae"] = mean_absolute_error(targets[test], model.predict(values[test]))
    payload["train_l1_loss"] = l1_loss(model, values[train], targets[train])
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{args.model}: train MAE {payload['train_mae']!r}, test MAE {payload['test_mae']!r}")
    return [args.out]


def cmd_solve(args):
    network = load_instance(args.instance)
    sample = _load_sample(args.sample) if args.sample else None
    features = _load_features(args.features) if args.features else None
    if args.variant == "reg" and args.lbar is None:
        if features is None or sample is None:
            raise SystemExit("variant reg without --lbar needs --features and --sample")
        result = algorithm_reg(
            network, features, sample.p, args.budget, seed=args.seed,
            impedance=args.impedance, norm_bound=args.lreg,
            search_kwargs={"restarts": args.restarts},
        )
    else:
        spec = ObjectiveSpec(
            variant=args.variant,
            impedance=args.impedance,
            sample=sample,
            features=features,
            loss_budget=float("inf") if args.lbar is None else args.lbar,
            norm_bound=args.lreg,
        )
        result = local_search_solve(network, spec, args.budget, seed=args.seed, restarts=args.restarts)
    design = Design.of(result.design.projects, result.design.nodes, args.budget, args.node_budget)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(design.to_json() + "\n")
    print(
        f"{args.variant}: objective {result.value!r}, exact {result.exact_value!r}, "
        f"{len(design.projects)} projects, {result.evaluations} evaluations"
    )
    return [args.out]


def cmd_bound(args):
    sample = _load_sample(args.sample)
    features = _load_features(args.features)
    params = BoundParams(mu=args.mu, lam=args.lam, g_bar=args.gbar, q_bar=args.qbar, gamma=args.gamma)
    if args.variant == "knn":
        terms = knn_bound(sample, features, params)
    else:
        if args.lbar is None:
            raise SystemExit("bound --variant reg requires --lbar")
        terms = reg_bound(sample, features, args.lbar, params)
    payload = {
        "variant": args.variant,
        "loss_term": terms.loss,
        "bias_term": terms.bias,
        "concentration_term": terms.concentration,
        "total": terms.total,
        "note": "minimization-form gap magnitude",
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return [args.out] if args.out else []


def cmd_greedy(args):
    network = load_instance(args.instance)
    from .search import greedy_expand

    steps = greedy_expand(network, args.budget, impedance=args.impedance)
    rows = [
        {
            "step": i,
            "project": -1 if s["project"] is None else int(s["project"]),
            "spent": float(s["spent"]),
            "objective": float(s["objective"]),
        }
        for i, s in enumerate(steps)
    ]
    write_csv(args.out, ["step", "project", "spent", "objective"], rows)
    print(f"greedy: {len(steps) - 1} projects, objective {rows[-1]['objective']!r}")
    return [args.out]


def _experiment_setup(args):
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.instance:
        config.instance = args.instance
    if args.threads:
        config.threads = args.threads
    network = load_instance(config.instance)
    return config, network


def _parse_feature_args(pairs):
    out = {}
    for item in pairs or []:
        if "=" in item:
            name, _, path = item.partition("=")
        else:
            name = item.rsplit("/", 1)[-1].rsplit(".", 1)[0]
            path = item
        out[name] = _load_features(path)
    return out


def cmd_exp1(args):
    config, network = _experiment_setup(args)
    features_by_name = _parse_feature_args(args.features)
    missing = [n for n in config.feature_sets if n not in features_by_name]
    for name in missing:
        if name == "tsp":
            features_by_name["tsp"] = tsp_features(network)
        else:
            raise SystemExit(f"feature set {name!r} not provided (use --features {name}=path)")
    rows = run_experiment1(network, features_by_name, config)
    emit_plotdata(rows, "exp1", args.out)
    print(f"{len(rows)} result rows -> {args.out}")
    return [args.out]


def cmd_exp2(args):
    config, network = _experiment_setup(args)
    features = _load_features(args.features)
    gap_rows, stability_rows, skipped = run_experiment2(network, features, config)
    emit_plotdata(gap_rows, "exp2", args.out)
    stability_path = args.out.replace(".csv", "") + "_stability.csv"
    emit_plotdata(stability_rows, "exp2_stability", stability_path)
    for cell in skipped:
        print(f"warning: skipped cell {cell['budget']}/{cell['measure']}: {cell['reason']}", file=sys.stderr)
    print(f"{len(gap_rows)} gap rows -> {args.out}; stability -> {stability_path}")
    return [args.out, stability_path]


def cmd_profile(args):
    config, network = _experiment_setup(args)
    features = _load_features(args.features)
    rows, timing_rows = run_profile(network, features, config, seed=args.seed)
    emit_plotdata(rows, "profile", args.out)
    timing_path = args.out.replace(".csv", "") + "_timings.csv"
    write_csv(timing_path, PROFILE_TIMING_HEADER, timing_rows)
    print(f"{len(rows)} budget rows -> {args.out}; timings -> {timing_path}")
    return [args.out]


def cmd_export_milp(args):
    network = load_instance(args.instance)
    sample = _load_sample(args.sample) if args.sample else None
    spec = ObjectiveSpec(variant=args.variant, impedance=args.impedance, sample=sample)
    stats = export_milp(network, spec, args.out, edge_budget=args.budget, node_budget=args.node_budget)
    if args.warm_start:
        design = _load_design(args.warm_start)
        export_warm_start(network, design, args.out + ".mst")
    print(
        f"{stats.encoding} encoding: {stats.n_variables} variables "
        f"({stats.n_binary} binary), {stats.n_constraints} constraints -> {args.out}"
    )
    return [args.out]


def cmd_import_solution(args):
    design = import_solution(args.solution, edge_budget=args.budget, node_budget=args.node_budget)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(design.to_json() + "\n")
    print(f"{len(design.projects)} projects, {len(design.nodes)} nodes -> {args.out}")
    return [args.out]


def build_parser():
    parser = argparse.ArgumentParser(prog="cyclenet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=out_required)

    p = sub.add_parser("gen", help="generate a synthetic grid instance")
    p.add_argument("--grid", type=int, default=6, help="grid cells per side")
    p.add_argument("--minor", type=int, default=3)
    p.add_argument("--signal-prob", type=float, default=0.3)
    p.add_argument("--centroids", type=int, default=72)
    p.add_argument("--connect-prob", type=float, default=0.7)
    p.add_argument("--cutoff", type=float, default=60.0)
    common(p)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("eval", help="evaluate a design: per-OD times and accessibility")
    p.add_argument("--instance", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--impedance", default="exp")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("embed", help="learn follower features from sampled designs")
    p.add_argument("--instance", required=True)
    p.add_argument("--nsim", type=int, default=5000)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--max-projects", type=int, default=25)
    p.add_argument("--max-nodes", type=int, default=10)
    p.add_argument("--walks", type=int, default=50)
    p.add_argument("--walk-length", type=int, default=20)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--impedance", default="exp")
    p.add_argument("--no-normalize", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("sample", help="select a follower subset")
    p.add_argument("--method", choices=["uni", "med", "cen"], required=True)
    p.add_argument("--p", type=float, required=True, help="count (>=1) or fraction (<1)")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--features", required=True)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--swaps", type=int, default=200)
    p.add_argument("--repeats", type=int, default=200)
    common(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("fit", help="fit a prediction model for one design's accessibilities")
    p.add_argument("--instance", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--sample", default=None)
    p.add_argument("--model", choices=["knn", "ols", "lasso", "ridge"], default="knn")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--impedance", default="exp")
    common(p)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("solve", help="optimize a design under an objective variant")
    p.add_argument("--variant", choices=["exact", "reduced", "knn", "reg"], required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--node-budget", type=float, default=0.0)
    p.add_argument("--sample", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--impedance", default="exp")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--lbar", type=float, default=None, help="training-loss budget (reg)")
    p.add_argument("--lreg", type=float, default=1.0, help="L1 norm bound on model weights (reg)")
    common(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bound", help="evaluate the optimality-gap bound of a sample")
    p.add_argument("--variant", choices=["knn", "reg"], required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--gbar", type=float, default=1.0)
    p.add_argument("--qbar", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--lbar", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bound)

    p = sub.add_parser("greedy", help="greedy expansion baseline")
    p.add_argument("--instance", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--impedance", default="exp")
    common(p)
    p.set_defaults(fn=cmd_greedy)

    p = sub.add_parser("exp1", help="prediction-accuracy experiment grid")
    p.add_argument("--config", default=None)
    p.add_argument("--instance", default=None)
    p.add_argument("--features", nargs="*", help="name=path pairs (rep=..., tsp=...)")
    common(p)
    p.set_defaults(fn=cmd_exp1)

    p = sub.add_parser("exp2", help="decision-quality experiment grid")
    p.add_argument("--config", default=None)
    p.add_argument("--instance", default=None)
    p.add_argument("--features", required=True)
    common(p)
    p.set_defaults(fn=cmd_exp2)

    p = sub.add_parser("profile", help="greedy-versus-optimized budget sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--instance", default=None)
    p.add_argument("--features", required=True)
    common(p)
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("export-milp", help="write the single-level model in LP format")
    p.add_argument("--instance", required=True)
    p.add_argument("--variant", choices=["exact", "reduced"], default="exact")
    p.add_argument("--sample", default=None)
    p.add_argument("--impedance", default="exp")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--node-budget", type=float, default=0.0)
    p.add_argument("--warm-start", default=None, help="design JSON to write as .mst")
    common(p)
    p.set_defaults(fn=cmd_export_milp)

    p = sub.add_parser("import-solution", help="parse a solver solution file into a design")
    p.add_argument("solution")
    p.add_argument("--budget", type=float, default=float("inf"))
    p.add_argument("--node-budget", type=float, default=float("inf"))
    common(p)
    p.set_defaults(fn=cmd_import_solution)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    tick = time.time()
    outputs = args.fn(args)
    if outputs:
        _write_manifest(outputs[0], args.command, args, time.time() - tick, outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
