"""Experiment orchestration: prediction accuracy, decision quality, and
greedy-versus-optimized budget profiles.

Primary outputs are flat CSV files with deterministic content for a fixed
config and seeds; anything time-dependent (wall clocks, versions) goes to
sidecar manifest files so re-runs stay byte-identical.  Method comparisons
are seed-paired: the same sample seed feeds every method in a cell.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .embedding import FollowerFeatures, as_feature_matrix
from .models import FAMILIES, KnnRegressor, fit_linear, mean_absolute_error
from .network import Network, load_instance
from .objectives import ObjectiveSpec
from .routing import TravelTimeEvaluator, get_impedance
from .sampling import make_sample
from .search import (
    EnumerationGuard,
    algorithm_reg,
    exhaustive_solve,
    greedy_expand,
    local_search_solve,
    random_feasible_designs,
)


@dataclass
class ExperimentConfig:
    """Knobs of the experiment harness (documented key-value file format)."""

    instance: str = ""
    budgets: tuple = (100.0, 300.0, 500.0)
    impedances: tuple = ("exp",)
    sizes: tuple = (0.01, 0.03, 0.05)
    samplers: tuple = ("uni", "med")
    models: tuple = ("knn",)
    feature_sets: tuple = ("rep", "tsp")
    seeds: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    n_designs: int = 12
    knn_k: int = 1
    lasso_alpha: float = 0.004
    ridge_alpha: float = 50.0
    med_iterations: int = 8
    med_swaps: int = 40
    cen_repeats: int = 20
    exp2_methods: tuple = ("reduced", "knn")
    exp2_size: float = 0.01
    exp2_knn_k: int = 1
    exp2_max_subsets: int = 200000
    reg_norm_bound: float = 1.0
    reg_l_step: float | None = None
    profile_budgets: tuple = ()
    profile_samples: int = 21
    restarts: int = 1
    threads: int = 1
    out_dir: str = "results"

    def validate(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        for size in tuple(self.sizes) + (self.exp2_size,):
            if not 0 < size <= 1:
                raise ValueError(f"sample sizes are fractions in (0, 1], got {size}")
        return self

    def key_values(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            out[f.name] = value
        return out

    def hash(self) -> str:
        canon = "\n".join(f"{k}={v}" for k, v in sorted(self.key_values().items()))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _coerce(raw: str, like):
    if isinstance(like, tuple):
        items = [tok.strip() for tok in raw.split(",") if tok.strip()]
        elem = like[0] if like else raw
        return tuple(_coerce(tok, elem) for tok in items)
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes")
    if like is None:
        return None if raw.lower() in ("none", "") else float(raw)
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def load_config(path) -> ExperimentConfig:
    """Read a ``key = value`` config file (comma-separated lists, # comments)."""
    defaults = ExperimentConfig()
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            if not hasattr(defaults, key):
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(raw.strip(), getattr(defaults, key))
    return ExperimentConfig(**values).validate()


def save_config(config: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in config.key_values().items():
            fh.write(f"{key} = {value}\n")


def version_string() -> str:
    try:
        sha = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
        ).stdout.strip()
        return f"{__version__}+g{sha}" if sha else __version__
    except OSError:
        return __version__


@dataclass
class RunRecord:
    """Re-execution manifest written next to every primary output."""

    command: str
    config_hash: str
    version: str
    seeds: tuple
    wall_time: float
    outputs: list

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def write_csv(path, header, rows):
    """Deterministic CSV: fixed header, repr-formatted floats, sorted rows
    are the caller's responsibility."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for key in header:
            value = row[key]
            if isinstance(value, float):
                cells.append(repr(value))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parallel_map(fn, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sample_size(fraction: float, n_followers: int) -> int:
    return max(1, int(round(fraction * n_followers)))


def _fit_and_score(model_name, config, train_x, train_y, test_x, test_y):
    if model_name == "knn":
        k = min(config.knn_k, train_x.shape[0])
        model = KnnRegressor(k=k).fit(train_x, train_y)
    elif model_name == "ols":
        model = fit_linear(train_x, train_y, "ols")
    elif model_name == "lasso":
        model = fit_linear(train_x, train_y, "lasso", alpha=config.lasso_alpha)
    elif model_name == "ridge":
        model = fit_linear(train_x, train_y, "ridge", alpha=config.ridge_alpha)
    else:
        raise ValueError(f"unknown model {model_name!r}")
    return mean_absolute_error(test_y, model.predict(test_x))


def _sampler_kwargs(method, config):
    if method == "med":
        return {"n_iteration": config.med_iterations, "n_swap": config.med_swaps}
    if method == "cen":
        return {"n_repeat": config.cen_repeats}
    return {}


def _exp1_slice(task):
    """All experiment-1 rows for one (budget, measure) slice of the grid."""
    network, features_by_name, config, budget, measure = task
    designs = random_feasible_designs(
        network, budget, config.n_designs, seed=int(budget) * 7919 + 1
    )
    evaluator = TravelTimeEvaluator(network, measure)
    targets = np.column_stack([evaluator.od_accessibility(d) for d in designs])
    rows = []
    for feat_name in config.feature_sets:
        features = features_by_name[feat_name]
        values, unembedded = as_feature_matrix(features)
        usable = np.flatnonzero(~unembedded)
        for method in config.samplers:
            for size in config.sizes:
                p = sample_size(size, network.n_od_pairs)
                per_seed = {model: [] for model in config.models}
                for seed in config.seeds:
                    sample = make_sample(
                        method, features, p, k=1, seed=seed,
                        **_sampler_kwargs(method, config),
                    )
                    train = sample.follower_ids
                    test = np.setdiff1d(usable, train)
                    for model_name in config.models:
                        maes = [
                            _fit_and_score(
                                model_name, config,
                                values[train], targets[train, j],
                                values[test], targets[test, j],
                            )
                            for j in range(len(designs))
                        ]
                        per_seed[model_name].append(float(np.mean(maes)))
                for model_name in config.models:
                    scores = per_seed[model_name]
                    rows.append(
                        {
                            "budget": float(budget),
                            "measure": measure,
                            "features": feat_name,
                            "sampler": method,
                            "model": model_name,
                            "size": float(size),
                            "mae_median": float(np.median(scores)),
                            "mae_mean": float(np.mean(scores)),
                            "n_seeds": len(scores),
                        }
                    )
    return rows


def run_experiment1(network: Network, features_by_name: dict, config: ExperimentConfig):
    """Out-of-sample prediction accuracy across the config grid.

    One row per (budget, measure, feature set, sampler, model, size) cell
    with the median and mean over seeds of the per-seed MAE (itself averaged
    over the datasets generated from ``n_designs`` random designs).
    (budget, measure) slices run in parallel workers when
    ``config.threads > 1``; the merged rows are key-sorted either way.
    """
    config.validate()
    tasks = [
        (network, features_by_name, config, budget, measure)
        for budget in config.budgets
        for measure in config.impedances
    ]
    rows = [row for chunk in parallel_map(_exp1_slice, tasks, config.threads) for row in chunk]
    rows.sort(key=lambda r: (r["budget"], r["measure"], r["features"], r["sampler"], r["model"], r["size"]))
    return rows


EXP1_HEADER = ["budget", "measure", "features", "sampler", "model", "size",
               "mae_median", "mae_mean", "n_seeds"]


def _cell_optimum(network, measure, budget, config):
    spec = ObjectiveSpec(variant="exact", impedance=measure)
    return exhaustive_solve(network, spec, budget, max_subsets=config.exp2_max_subsets)


def run_experiment2(network: Network, features, config: ExperimentConfig,
                    optima: dict | None = None):
    """Optimality gaps of sampled/augmented methods against cell optima.

    Returns (gap_rows, stability_rows, skipped).  Cells whose optimum is
    unavailable (enumeration guard and no provided optimum) are skipped
    with a warning entry.  Gap = (F* - F(x)) / F*, in [0, 1] when F* > 0.
    """
    config.validate()
    optima = dict(optima or {})
    p = sample_size(config.exp2_size, network.n_od_pairs)
    gap_rows, stability_rows, skipped = [], [], []
    for budget in config.budgets:
        for measure in config.impedances:
            key = (float(budget), measure)
            if key in optima:
                best_value = float(optima[key])
            else:
                try:
                    best_value = _cell_optimum(network, measure, budget, config).exact_value
                except EnumerationGuard as err:
                    skipped.append({"budget": float(budget), "measure": measure, "reason": str(err)})
                    continue
            cell = {}
            for method in config.exp2_methods:
                for sampler in config.samplers:
                    gaps = []
                    for seed in config.seeds:
                        k = config.exp2_knn_k if method == "knn" else 1
                        sample = make_sample(
                            features=features, method=sampler, p=p, k=k, seed=seed,
                            **_sampler_kwargs(sampler, config),
                        )
                        if method == "reg":
                            result = algorithm_reg(
                                network, features, p, budget, seed=seed,
                                impedance=measure, norm_bound=config.reg_norm_bound,
                                l_step=config.reg_l_step,
                                sampler_kwargs=_sampler_kwargs("med", config),
                                search_kwargs={"restarts": config.restarts},
                            )
                        else:
                            spec = ObjectiveSpec(
                                variant="knn" if method == "knn" else "reduced",
                                impedance=measure, sample=sample,
                            )
                            result = local_search_solve(
                                network, spec, budget, seed=seed, restarts=config.restarts
                            )
                        gap = 0.0 if best_value <= 0 else (best_value - result.exact_value) / best_value
                        gap = float(min(max(gap, 0.0), 1.0))
                        gaps.append(gap)
                        gap_rows.append(
                            {
                                "budget": float(budget),
                                "measure": measure,
                                "method": method,
                                "sampler": sampler,
                                "size": float(config.exp2_size),
                                "seed": int(seed),
                                "gap": gap,
                            }
                        )
                    cell[(method, sampler)] = gaps
            for (method, sampler), gaps in sorted(cell.items()):
                stability_rows.append(
                    {
                        "budget": float(budget),
                        "measure": measure,
                        "method": method,
                        "sampler": sampler,
                        "size": float(config.exp2_size),
                        "gap_mean": float(np.mean(gaps)),
                        "gap_std": float(np.std(gaps)),
                        "n_seeds": len(gaps),
                    }
                )
    gap_rows.sort(key=lambda r: (r["budget"], r["measure"], r["method"], r["sampler"], r["seed"]))
    stability_rows.sort(key=lambda r: (r["budget"], r["measure"], r["method"], r["sampler"]))
    return gap_rows, stability_rows, skipped


EXP2_HEADER = ["budget", "measure", "method", "sampler", "size", "seed", "gap"]
EXP2_STABILITY_HEADER = ["budget", "measure", "method", "sampler", "size",
                         "gap_mean", "gap_std", "n_seeds"]


def run_profile(network: Network, features, config: ExperimentConfig, seed=0):
    """Greedy-versus-optimized budget sweep.

    For every budget: the greedy baseline objective and the best exact
    objective over ``profile_samples`` augmented-model solves, each with a
    fresh sample seed (paired across budgets).  Returns (rows, timing_rows);
    timings go to a sidecar file because they are not reproducible.
    """
    config.validate()
    budgets = config.profile_budgets or config.budgets
    measure = config.impedances[0]
    p = sample_size(config.exp2_size, network.n_od_pairs)
    rows, timing_rows = [], []
    for budget in budgets:
        tick = time.perf_counter()
        steps = greedy_expand(network, budget, impedance=measure)
        greedy_value = steps[-1]["objective"]
        greedy_time = time.perf_counter() - tick

        tick = time.perf_counter()
        best_value = -np.inf
        for i in range(config.profile_samples):
            sample = make_sample(
                features=features, method="med", p=p, k=config.exp2_knn_k,
                seed=seed + i, **_sampler_kwargs("med", config),
            )
            spec = ObjectiveSpec(variant="knn", impedance=measure, sample=sample)
            result = local_search_solve(
                network, spec, budget, seed=seed + i, restarts=config.restarts
            )
            best_value = max(best_value, result.exact_value)
        opt_time = time.perf_counter() - tick
        rows.append(
            {
                "budget": float(budget),
                "greedy_objective": float(greedy_value),
                "optimized_objective": float(best_value),
                "n_samples": config.profile_samples,
            }
        )
        timing_rows.append(
            {
                "budget": float(budget),
                "greedy_seconds": greedy_time,
                "optimized_seconds": opt_time,
            }
        )
    return rows, timing_rows


PROFILE_HEADER = ["budget", "greedy_objective", "optimized_objective", "n_samples"]
PROFILE_TIMING_HEADER = ["budget", "greedy_seconds", "optimized_seconds"]

PLOT_HEADERS = {
    "exp1": EXP1_HEADER,
    "exp2": EXP2_HEADER,
    "exp2_stability": EXP2_STABILITY_HEADER,
    "profile": PROFILE_HEADER,
}


def emit_plotdata(rows, kind, path):
    """Plot-ready long-format CSV with a fixed, documented column order.

    Rows are sorted by all key columns; a re-run over the same report is
    byte-identical.  Empty reports produce a header-only file.
    """
    try:
        header = PLOT_HEADERS[kind]
    except KeyError:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_HEADERS)}") from None
    key_cols = [c for c in header if c not in ("mae_median", "mae_mean", "gap", "gap_mean",
                                               "gap_std", "greedy_objective",
                                               "optimized_objective")]
    ordered = sorted(rows, key=lambda r: tuple(str(r[c]) for c in key_cols))
    write_csv(path, header, ordered)
    return path
