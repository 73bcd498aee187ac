"""Pipelines behind the command line.

Each run_* function takes a merged configuration dict (see config.py), a
seed, and an output directory; it returns the report dict that also lands
in report.json. Stage wall times are collected along the way.
"""

import itertools
import json
import logging
import os
import time
from contextlib import contextmanager

import numpy as np

from . import fastsum
from .allencahn import AllenCahnParams, LabelData, allen_cahn_solve, predict_labels
from .datapipe import (
    GroupSpec,
    GroupingSpec,
    complementary_sbm,
    feature_group,
    image_to_features,
    load_features_csv,
    load_image,
    load_labels_csv,
    masks_from_labels,
    noisy_pair_sbm,
    sample_labels,
    sbm_generate,
    save_image,
    write_predictions_csv,
    write_scores_csv,
    write_values_csv,
)
from .errors import ConfigError
from .graphs import MultilayerGraph, build_layer, load_edge_list
from .kernels import KernelSpec
from .powermean import PowerMeanConfig, power_mean_eigs

log = logging.getLogger(__name__)

# composite-mask colors, cycled when there are more classes
PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (170, 110, 40),
)

# default image grouping: one color layer over all pixels, one spatial layer
# per connected image; bandwidths refer to [-1,1]-scaled coordinates
SEGMENT_GROUPS = (
    {"columns": [0, 1, 2], "family": "gaussian", "sigma": 1.0, "mode": "unit-box"},
    {"columns": [3, 4], "family": "gaussian", "sigma": 4.0, "mode": "unit-box",
     "per_component": True},
)


class Stopwatch:
    def __init__(self):
        self.times = {}
        self._t0 = time.perf_counter()

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - start

    def total(self):
        return time.perf_counter() - self._t0

    def report(self):
        out = {name: round(t, 6) for name, t in self.times.items()}
        out["total"] = round(self.total(), 6)
        return out


def _ensure_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _write_report(out_dir, report):
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return path


def _fastsum_params(cfg):
    f = cfg["fastsum"]
    return {"N": int(f["N"]), "m_nfft": int(f["m"]), "eps_b": float(f["eps_b"]),
            "p_nfft": int(f["p"]), "rho": float(f["rho"])}


def grouping_from_config(group_dicts):
    groups = []
    for g in group_dicts:
        kernel = KernelSpec(family=g.get("family", "gaussian"), sigma=float(g["sigma"]))
        groups.append(GroupSpec(
            columns=tuple(g["columns"]),
            kernel=kernel,
            mode=g.get("mode", "fastsum-box"),
            per_component=bool(g.get("per_component", False)),
        ))
    return GroupingSpec(tuple(groups))


def _graph_from_edge_lists(paths, n_nodes):
    if not paths:
        raise ConfigError("input.edge_lists must list at least one file")
    if n_nodes is None:
        # infer a common node count, then reload the smaller layers onto it
        weights = [load_edge_list(p) for p in paths]
        n = max(w.n for w in weights)
        weights = [w if w.n == n else load_edge_list(p, n) for w, p in zip(weights, paths)]
    else:
        weights = [load_edge_list(p, int(n_nodes)) for p in paths]
    return MultilayerGraph(tuple(build_layer(w) for w in weights))


def _build_graph(cfg, watch, components=None, features=None):
    """Graph from config: explicit features, a feature CSV, or edge lists."""
    icfg = cfg["input"]
    if features is None and icfg["features_csv"]:
        with watch.stage("load"):
            features = load_features_csv(icfg["features_csv"])
    if features is not None:
        groups = cfg["grouping"]["groups"]
        if groups is None:
            raise ConfigError("feature input needs grouping.groups")
        with watch.stage("graph"):
            spec = grouping_from_config(groups)
            return feature_group(features, spec, components=components,
                                 fastsum_params=_fastsum_params(cfg))
    if icfg["edge_lists"]:
        with watch.stage("graph"):
            return _graph_from_edge_lists(icfg["edge_lists"], icfg["n_nodes"])
    raise ConfigError("no graph input: set input.features_csv or input.edge_lists")


def _load_truth(cfg, n):
    path = cfg["input"]["truth_csv"]
    if not path:
        return None
    truth = load_labels_csv(path, n=n)
    if truth.min() < 0:
        raise ConfigError(f"{path}: ground truth must assign a class to every node")
    return truth


def _load_labels(cfg, n, truth, seed):
    icfg = cfg["input"]
    omega0 = icfg["omega0"] if icfg["omega0"] is not None else cfg["ac"]["omega0"]
    if icfg["labels_csv"]:
        ids = load_labels_csv(icfg["labels_csv"], n=n)
        if ids.max() < 0:
            raise ConfigError(f"{icfg['labels_csv']}: no labeled nodes")
        m = int(ids.max()) + 1
        if truth is not None:
            m = max(m, int(truth.max()) + 1)
        return LabelData.from_class_ids(ids, max(m, 2), omega0)
    if icfg["label_fraction"] is not None:
        if truth is None:
            raise ConfigError("input.label_fraction needs input.truth_csv")
        return sample_labels(truth, float(icfg["label_fraction"]), (seed, 1), omega0)
    raise ConfigError(
        "classification needs input.labels_csv, or input.truth_csv with input.label_fraction"
    )


def _power_config(cfg):
    pcfg = cfg["power"]
    return PowerMeanConfig(p=float(pcfg["p"]), delta=pcfg["delta"],
                           dense_limit=int(pcfg["dense_limit"]))


def _solve_eigs(graph, cfg, k, seed, watch):
    ecfg = cfg["eig"]
    with watch.stage("eig"):
        return power_mean_eigs(
            graph,
            _power_config(cfg),
            k=k,
            tol=float(ecfg["tol"]),
            max_subspace=None if ecfg["max_subspace"] is None else int(ecfg["max_subspace"]),
            max_restarts=int(ecfg["max_restarts"]),
            krylov_dim=int(cfg["pksm"]["krylov_dim"]),
            inner_tol=float(cfg["pksm"]["tol"]),
            seed=seed,
        )


def _ac_params(cfg):
    a = cfg["ac"]
    return AllenCahnParams(
        epsilon=float(a["epsilon"]), omega0=float(a["omega0"]),
        c=None if a["c"] is None else float(a["c"]),
        dt=float(a["dt"]), tolerance=float(a["tolerance"]), max_iter=int(a["max_iter"]),
    )


def _metrics(predictions, truth, labeled_mask):
    out = {}
    if truth is None:
        return out
    hits = predictions == truth
    out["accuracy"] = float(np.mean(hits))
    out["misclassification"] = 1.0 - out["accuracy"]
    unl = ~labeled_mask
    out["accuracy_unlabeled"] = float(np.mean(hits[unl])) if unl.any() else out["accuracy"]
    return out


def _classify_graph(graph, labels, cfg, seed, watch):
    """Shared spectral + Allen-Cahn stage; returns (basis, result, predictions)."""
    basis = _solve_eigs(graph, cfg, int(cfg["eig"]["k"]), seed, watch)
    with watch.stage("ac"):
        result = allen_cahn_solve(basis, labels, _ac_params(cfg))
    return basis, result, predict_labels(result.scores)


def run_classify(cfg, seed, out_dir=".", threads=1, command="classify"):
    fastsum.set_fft_workers(threads)
    watch = Stopwatch()
    graph = _build_graph(cfg, watch)
    truth = _load_truth(cfg, graph.n)
    labels = _load_labels(cfg, graph.n, truth, seed)
    if labels.n != graph.n:
        raise ConfigError(f"{labels.n} labels for a graph on {graph.n} nodes")
    basis, result, predictions = _classify_graph(graph, labels, cfg, seed, watch)
    out_dir = _ensure_out(out_dir)
    outputs = {}
    with watch.stage("write"):
        path = os.path.join(out_dir, "predictions.csv")
        write_predictions_csv(path, predictions)
        outputs["predictions"] = path
        if cfg["output"]["write_scores"]:
            path = os.path.join(out_dir, "scores.csv")
            write_scores_csv(path, result.scores)
            outputs["scores"] = path
        if cfg["output"]["write_vectors"]:
            path = os.path.join(out_dir, "eigenvectors.csv")
            write_scores_csv(path, basis.vectors)
            outputs["eigenvectors"] = path
    report = {
        "command": command,
        "seed": seed,
        "n": graph.n,
        "layers": graph.T,
        "classes": labels.m,
        "p": float(cfg["power"]["p"]),
        "k": basis.k,
        "eigenvalues": [float(v) for v in basis.values],
        "iterations": result.iterations,
        "converged": result.converged,
    }
    report.update(_metrics(predictions, truth, labels.labeled_mask))
    report["times"] = watch.report()
    report["outputs"] = outputs
    report["config"] = cfg
    outputs["report"] = _write_report(out_dir, report)
    return report


def run_segment_image(cfg, seed, out_dir=".", threads=1):
    fastsum.set_fft_workers(threads)
    watch = Stopwatch()
    icfg = cfg["input"]
    images = icfg["images"]
    if not images:
        raise ConfigError("segment-image needs input.images")
    if isinstance(images, str):
        images = [images]
    with watch.stage("load"):
        stack = image_to_features([load_image(p) for p in images])
        features = np.hstack([stack.rgb, stack.xy])
    groups = cfg["grouping"]["groups"]
    if groups is None:
        groups = [dict(g) for g in SEGMENT_GROUPS]
    with watch.stage("graph"):
        spec = grouping_from_config(groups)
        graph = feature_group(features, spec, components=stack.components,
                              fastsum_params=_fastsum_params(cfg))
    truth = _load_truth(cfg, graph.n)
    labels = _load_labels(cfg, graph.n, truth, seed)
    basis, result, predictions = _classify_graph(graph, labels, cfg, seed, watch)
    out_dir = _ensure_out(out_dir)
    outputs = {}
    with watch.stage("write"):
        path = os.path.join(out_dir, "predictions.csv")
        write_predictions_csv(path, predictions)
        outputs["predictions"] = path
        if cfg["output"]["write_scores"]:
            path = os.path.join(out_dir, "scores.csv")
            write_scores_csv(path, result.scores)
            outputs["scores"] = path
        if cfg["output"]["write_masks"]:
            masks = masks_from_labels(predictions, stack.shapes)
            palette = np.array([PALETTE[c % len(PALETTE)] for c in range(labels.m)],
                               dtype=np.uint8)
            for i, mask in enumerate(masks):
                for c in range(labels.m):
                    path = os.path.join(out_dir, f"mask_img{i}_class{c + 1}.png")
                    save_image(path, np.where(mask == c, 255, 0).astype(np.uint8))
                    outputs[f"mask_img{i}_class{c + 1}"] = path
                path = os.path.join(out_dir, f"composite_img{i}.png")
                save_image(path, palette[mask])
                outputs[f"composite_img{i}"] = path
    report = {
        "command": "segment-image",
        "seed": seed,
        "n": graph.n,
        "layers": graph.T,
        "classes": labels.m,
        "images": [list(s) for s in stack.shapes],
        "p": float(cfg["power"]["p"]),
        "k": basis.k,
        "eigenvalues": [float(v) for v in basis.values],
        "iterations": result.iterations,
        "converged": result.converged,
    }
    report.update(_metrics(predictions, truth, labels.labeled_mask))
    report["times"] = watch.report()
    report["outputs"] = outputs
    report["config"] = cfg
    outputs["report"] = _write_report(out_dir, report)
    return report


def run_eig(cfg, seed, out_dir=".", threads=1):
    fastsum.set_fft_workers(threads)
    watch = Stopwatch()
    graph = _build_graph(cfg, watch)
    basis = _solve_eigs(graph, cfg, int(cfg["eig"]["k"]), seed, watch)
    out_dir = _ensure_out(out_dir)
    outputs = {}
    with watch.stage("write"):
        path = os.path.join(out_dir, "eigenvalues.csv")
        write_values_csv(path, basis.values)
        outputs["eigenvalues"] = path
        if cfg["output"]["write_vectors"]:
            path = os.path.join(out_dir, "eigenvectors.csv")
            write_scores_csv(path, basis.vectors)
            outputs["eigenvectors"] = path
    report = {
        "command": "eig",
        "seed": seed,
        "n": graph.n,
        "layers": graph.T,
        "p": float(cfg["power"]["p"]),
        "k": basis.k,
        "eigenvalues": [float(v) for v in basis.values],
        "times": watch.report(),
        "outputs": outputs,
        "config": cfg,
    }
    outputs["report"] = _write_report(out_dir, report)
    return report


# ---------------------------------------------------------------------------
# benchmarks


def _sbm_spec(bcfg):
    setup = bcfg["setup"]
    if setup == "noisy-pair":
        return noisy_pair_sbm(n_cluster=int(bcfg["n_cluster"]), p_in=float(bcfg["p_in"]),
                              p_out=float(bcfg["p_out"]), p_noise=float(bcfg["p_noise"]))
    if setup == "complementary":
        return complementary_sbm(n_cluster=int(bcfg["n_cluster"]), p_in=float(bcfg["p_in"]),
                                 p_out=float(bcfg["p_out"]))
    raise ConfigError(f"unknown bench.sbm.setup {setup!r} (noisy-pair or complementary)")


def _sbm_variants(T, subsets):
    variants = []
    if subsets:
        for size in range(1, T):
            variants.extend(itertools.combinations(range(T), size))
    variants.append(tuple(range(T)))
    return variants


def run_sbm_bench(cfg, seed, out_dir=".", threads=1):
    """Repeated block-model classification across layer subsets and powers.

    Per repetition r: one graph draw, one label draw, then each (layer
    subset, p) pair is classified and its all-node misclassification
    recorded. Means and standard deviations go to CSV and a text table.
    """
    fastsum.set_fft_workers(threads)
    watch = Stopwatch()
    bcfg = cfg["bench"]["sbm"]
    spec = _sbm_spec(bcfg)
    reps = int(bcfg["repetitions"])
    if reps < 1:
        raise ConfigError("bench.sbm.repetitions must be >= 1")
    p_values = [float(p) for p in bcfg["p_values"]]
    if not p_values:
        raise ConfigError("bench.sbm.p_values must not be empty")
    T = len(spec.layers)
    variants = _sbm_variants(T, bool(bcfg["subsets"]))
    fraction = float(bcfg["label_fraction"])
    omega0 = float(cfg["ac"]["omega0"])
    k = len(spec.sizes)
    errors = np.zeros((len(variants), len(p_values), reps))
    errors_unl = np.zeros_like(errors)
    with watch.stage("bench"):
        for r in range(reps):
            graph, truth = sbm_generate(spec, (seed, r, 0))
            labels = sample_labels(truth, fraction, (seed, r, 1), omega0)
            for vi, layer_idx in enumerate(variants):
                sub = graph.subgraph(layer_idx)
                for pi, p in enumerate(p_values):
                    run_cfg = {**cfg, "power": {**cfg["power"], "p": p},
                               "eig": {**cfg["eig"], "k": k}}
                    basis = _solve_eigs(sub, run_cfg, k, seed=r, watch=Stopwatch())
                    result = allen_cahn_solve(basis, labels, _ac_params(cfg))
                    pred = predict_labels(result.scores)
                    hits = pred == truth
                    errors[vi, pi, r] = 1.0 - float(np.mean(hits))
                    unl = ~labels.labeled_mask
                    errors_unl[vi, pi, r] = 1.0 - float(np.mean(hits[unl]))
            log.info("sbm-bench repetition %d/%d done", r + 1, reps)
    mean = errors.mean(axis=2)
    std = errors.std(axis=2)
    mean_unl = errors_unl.mean(axis=2)
    out_dir = _ensure_out(out_dir)
    csv_path = os.path.join(out_dir, "sbm_bench.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("layers,n_layers,p,mean_error,std_error,mean_error_unlabeled\n")
        for vi, layer_idx in enumerate(variants):
            name = "+".join(str(i) for i in layer_idx)
            for pi, p in enumerate(p_values):
                fh.write(f"{name},{len(layer_idx)},{p:g},{mean[vi, pi]:.6f},"
                         f"{std[vi, pi]:.6f},{mean_unl[vi, pi]:.6f}\n")
    txt_path = os.path.join(out_dir, "sbm_bench.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"{spec.n} nodes, {T} layers, {reps} repetitions, "
                 f"{fraction:.0%} labels; mean error % (std)\n\n")
        header = "layers".ljust(12) + "".join(f"p={p:<14g}" for p in p_values)
        fh.write(header.rstrip() + "\n")
        for vi, layer_idx in enumerate(variants):
            name = "+".join(str(i) for i in layer_idx)
            cells = "".join(
                f"{100 * mean[vi, pi]:6.2f} ({100 * std[vi, pi]:5.2f}) "
                for pi in range(len(p_values))
            )
            fh.write(name.ljust(12) + cells.rstrip() + "\n")
    report = {
        "command": "sbm-bench",
        "seed": seed,
        "setup": bcfg["setup"],
        "n": spec.n,
        "layers": T,
        "repetitions": reps,
        "p_values": p_values,
        "variants": ["+".join(str(i) for i in v) for v in variants],
        "mean_error": mean.tolist(),
        "std_error": std.tolist(),
        "mean_error_unlabeled": mean_unl.tolist(),
        "times": watch.report(),
        "outputs": {"csv": csv_path, "table": txt_path},
        "config": cfg,
    }
    report["outputs"]["report"] = _write_report(out_dir, report)
    return report


def _box_points(rng, n, d, eps_b):
    hw = fastsum.box_halfwidth(eps_b)
    return rng.uniform(-hw, hw, size=(n, d))


def run_fastsum_bench(cfg, seed, out_dir=".", threads=1):
    """Accuracy table (fast vs direct, small n) and a scaling sweep.

    Scaling times one matrix-vector apply with a prebuilt point binding,
    which is the hot path during eigensolves; the direct quadratic path is
    timed on the same points for contrast when with_direct is set.
    """
    fastsum.set_fft_workers(threads)
    watch = Stopwatch()
    bcfg = cfg["bench"]["fastsum"]
    kernel = KernelSpec(family=bcfg["family"], sigma=float(bcfg["sigma"]))
    params = _fastsum_params(cfg)
    eps_b = params["eps_b"]
    reps = int(bcfg["repetitions"])
    if reps < 1:
        raise ConfigError("bench.fastsum.repetitions must be >= 1")
    accuracy = []
    with watch.stage("accuracy"):
        acc_n = int(bcfg["accuracy_n"])
        for d in [int(x) for x in bcfg["accuracy_dims"]]:
            rng = np.random.default_rng((seed, 101, d))
            points = _box_points(rng, acc_n, d, eps_b)
            v = rng.standard_normal(acc_n)
            plan = fastsum.build_plan(kernel, d=d, **params)
            binding = fastsum.bind_points(plan, points)
            t0 = time.perf_counter()
            fast = fastsum.fastsum_apply(None, v, plan, binding=binding)
            t_fast = time.perf_counter() - t0
            t0 = time.perf_counter()
            exact = fastsum.direct_apply(points, v, kernel)
            t_direct = time.perf_counter() - t0
            rel = float(np.linalg.norm(fast - exact) / np.linalg.norm(exact))
            accuracy.append({"d": d, "n": acc_n, "rel_error": rel,
                             "t_fast": round(t_fast, 6), "t_direct": round(t_direct, 6)})
    d_scale = int(bcfg["d"])
    sizes = [int(n) for n in bcfg["sizes"]]
    with_direct = bool(bcfg["with_direct"])
    scaling = {"d": d_scale, "sizes": sizes, "t_fast": [], "t_direct": []}
    with watch.stage("scaling"):
        plan = fastsum.build_plan(kernel, d=d_scale, **params)
        for n in sizes:
            rng = np.random.default_rng((seed, 202, n))
            points = _box_points(rng, n, d_scale, eps_b)
            v = rng.standard_normal(n)
            binding = fastsum.bind_points(plan, points)
            fastsum.fastsum_apply(None, v, plan, binding=binding)  # warm up
            t_fast = []
            for _ in range(reps):
                t0 = time.perf_counter()
                fastsum.fastsum_apply(None, v, plan, binding=binding)
                t_fast.append(time.perf_counter() - t0)
            scaling["t_fast"].append(float(np.median(t_fast)))
            if with_direct:
                t_direct = []
                for _ in range(reps):
                    t0 = time.perf_counter()
                    fastsum.direct_apply(points, v, kernel)
                    t_direct.append(time.perf_counter() - t0)
                scaling["t_direct"].append(float(np.median(t_direct)))
            log.info("fastsum-bench n=%d done", n)
    out_dir = _ensure_out(out_dir)
    acc_path = os.path.join(out_dir, "fastsum_accuracy.csv")
    with open(acc_path, "w", encoding="utf-8") as fh:
        fh.write("d,n,rel_error,t_fast,t_direct\n")
        for row in accuracy:
            fh.write(f"{row['d']},{row['n']},{row['rel_error']:.3e},"
                     f"{row['t_fast']:.6f},{row['t_direct']:.6f}\n")
    scale_path = os.path.join(out_dir, "fastsum_scaling.csv")
    with open(scale_path, "w", encoding="utf-8") as fh:
        fh.write("n,t_fast_median" + (",t_direct_median" if with_direct else "") + "\n")
        for i, n in enumerate(sizes):
            line = f"{n},{scaling['t_fast'][i]:.6f}"
            if with_direct:
                line += f",{scaling['t_direct'][i]:.6f}"
            fh.write(line + "\n")
    txt_path = os.path.join(out_dir, "fastsum_bench.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"kernel {kernel.family}, sigma {kernel.sigma:g} (box units), "
                 f"N={params['N']}, m={params['m_nfft']}, median of {reps}\n\n")
        fh.write("accuracy (n=%d):\n" % int(bcfg["accuracy_n"]))
        for row in accuracy:
            fh.write(f"  d={row['d']}  rel_error={row['rel_error']:.3e}  "
                     f"fast {row['t_fast']:.4f}s  direct {row['t_direct']:.4f}s\n")
        fh.write(f"\nscaling (d={d_scale}, apply with prebuilt binding):\n")
        for i, n in enumerate(sizes):
            line = f"  n={n:<8d} fast {scaling['t_fast'][i]:.4f}s"
            if with_direct:
                line += f"  direct {scaling['t_direct'][i]:.4f}s"
            fh.write(line + "\n")
    report = {
        "command": "fastsum-bench",
        "seed": seed,
        "accuracy": accuracy,
        "scaling": scaling,
        "times": watch.report(),
        "outputs": {"accuracy_csv": acc_path, "scaling_csv": scale_path, "table": txt_path},
        "config": cfg,
    }
    report["outputs"]["report"] = _write_report(out_dir, report)
    return report
