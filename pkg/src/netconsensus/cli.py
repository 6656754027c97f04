"""Command-line workbench.

Subcommands: sample, spectrum, predict, consensus, gadget, sweep, fit,
bifurcation. Every subcommand accepts --config (flat key/value JSON whose
keys mirror the long flag names) plus flags; explicit flags win over config
values. Outputs are JSON/CSV files under --out. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, consensus, data, gossip, rmt, sbm, spectra


def _load_config(path):
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a flat JSON object")
    return doc


def _setting(args, config, key, default=None, required=False):
    """Flag value if given, else config value, else default."""
    val = getattr(args, key, None)
    if val is None:
        val = config.get(key, default)
    if required and val is None:
        raise ValueError(f"missing required setting {key!r} (flag or config)")
    return val


def _parse_sizes(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(tok) for tok in str(value).replace(",", " ").split())


def _out_dir(args, config):
    out = _setting(args, config, "out", default="out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _model_from_settings(args, config, default_seed=0):
    sizes = _parse_sizes(_setting(args, config, "sizes", required=True))
    p_in = float(_setting(args, config, "p_in", required=True))
    p_out = float(_setting(args, config, "p_out", required=True))
    seed = int(_setting(args, config, "seed", default=default_seed))
    return sbm.make_two_level_model(sizes, sbm.TwoLevelProbs(p_in, p_out), seed)


def _resolve_dataset(ref, seed=0):
    """Dataset reference: a sparse-text path or blobs:N:D:MARGIN[:SEED]."""
    if ref.startswith("blobs:"):
        parts = ref.split(":")
        if len(parts) not in (4, 5):
            raise ValueError(f"bad blobs spec {ref!r}; want blobs:N:D:MARGIN[:SEED]")
        n, d, margin = int(parts[1]), int(parts[2]), float(parts[3])
        blob_seed = int(parts[4]) if len(parts) == 5 else seed
        return data.make_blobs(n, d, margin, seed=blob_seed)
    return data.load_sparse_text(ref)


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2))


# ---------------------------------------------------------------- commands


def _cmd_sample(args):
    config = _load_config(args.config) if args.config else {}
    model = _model_from_settings(args, config)
    out = _out_dir(args, config)
    net, attempts = sbm.sample_connected(model) if args.connected else (sbm.sample(model), 1)
    sbm.save_edge_list(net, out / "network.txt")
    sbm.network_to_json(net, out / "network.json")
    _write_json(out / "sample.json", {
        "n": net.n, "edges": net.num_edges, "connected": sbm.is_connected(net),
        "attempts": attempts, "seed": model.seed,
    })
    return 0


def _load_network(args, config):
    net_path = _setting(args, config, "net")
    if net_path is not None:
        net_path = Path(net_path)
        if net_path.suffix == ".json":
            return sbm.network_from_json(net_path)
        return sbm.load_edge_list(net_path)
    model = _model_from_settings(args, config)
    net, _ = sbm.sample_connected(model)
    return net


def _cmd_spectrum(args):
    config = _load_config(args.config) if args.config else {}
    net = _load_network(args, config)
    out = _out_dir(args, config)
    spec = spectra.normalized_laplacian_spectrum(net)
    with (out / "eigenvalues.csv").open("w") as fh:
        for v in spec.eigenvalues:
            fh.write(f"{v!r}\n")
    bins = int(_setting(args, config, "bins", default=80))
    _write_json(out / "histogram.json", spectra.eigenvalue_histogram(spec.eigenvalues, bins=bins))
    _write_json(out / "spectrum.json", {
        "n": net.n,
        "lambda2": spec.lambda2,
        "mu2_abs": spec.mu2_abs,
        "second_mode_positive": spec.second_mode_positive,
    })
    return 0


def _cmd_predict(args):
    config = _load_config(args.config) if args.config else {}
    model = _model_from_settings(args, config)
    out = _out_dir(args, config)
    eta = float(_setting(args, config, "eta", default=rmt.DEFAULT_ETA))
    grid_points = int(_setting(args, config, "grid_points", default=401))
    pred = rmt.predict(model, eta=eta)
    if grid_points != 401:
        lam_l, lam_r = pred.support
        span = max(lam_r - lam_l, 0.05)
        grid = np.linspace(lam_l - 0.1 * span, lam_r + 0.1 * span, grid_points)
        density, _ = rmt.bulk_density(model, grid, eta=eta)
        pred.grid, pred.density = grid, density
    _write_json(out / "prediction.json", pred.to_json_dict())
    with (out / "prediction.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "density"])
        for lam, rho in zip(pred.grid, pred.density):
            writer.writerow([repr(float(lam)), repr(float(rho))])
    return 0


def _cmd_consensus(args):
    config = _load_config(args.config) if args.config else {}
    model = _model_from_settings(args, config)
    out = _out_dir(args, config)
    epsilon = float(_setting(args, config, "epsilon", default=1e-10))
    max_rounds = int(_setting(args, config, "max_rounds", default=200_000))
    net, _ = sbm.sample_connected(model)
    spec = spectra.normalized_laplacian_spectrum(net)
    x0 = consensus.random_initial_state(net.n, model.seed)
    result = consensus.run(net, x0, epsilon, max_rounds=max_rounds)
    p_in = float(model.edge_probs[0, 0])
    p_out = float(model.edge_probs[0, 1]) if model.num_communities > 1 else p_in
    _write_json(out / "consensus.json", {
        "n": net.n,
        "K": model.num_communities,
        "p_in": p_in,
        "p_out": p_out,
        "delta": p_in - p_out,
        "epsilon": epsilon,
        "tau_eps": result.tau_eps,
        "censored": result.censored,
        "lambda2_empirical": spec.lambda2,
        "mu2_abs": spec.mu2_abs,
    })
    if bool(_setting(args, config, "trace", default=True)):
        with (out / "consensus_trace.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "error"])
            for t, err in enumerate(result.error_trace):
                writer.writerow([t, repr(float(err))])
    return 0


def _cmd_gadget(args):
    config = _load_config(args.config) if args.config else {}
    model = _model_from_settings(args, config)
    out = _out_dir(args, config)
    dataset_ref = _setting(args, config, "dataset", required=True)
    dataset = _resolve_dataset(dataset_ref, seed=model.seed)
    learning_rounds = _setting(args, config, "learning_rounds", default=200)
    cfg = gossip.GadgetConfig(
        nu=float(_setting(args, config, "nu", default=0.1)),
        epsilon=float(_setting(args, config, "epsilon", default=1e-10)),
        max_rounds=int(_setting(args, config, "max_rounds", default=200_000)),
        steps_per_round=int(_setting(args, config, "steps_per_round", default=1)),
        learning_rounds=None if learning_rounds in (None, "none") else int(learning_rounds),
        seed=int(_setting(args, config, "seed", default=model.seed)),
    )
    result = gossip.run_gadget(model, dataset, cfg)
    _write_json(out / "gadget.json", {
        "config": {
            "nu": cfg.nu, "epsilon": cfg.epsilon, "max_rounds": cfg.max_rounds,
            "steps_per_round": cfg.steps_per_round, "learning_rounds": cfg.learning_rounds,
            "seed": cfg.seed, "dataset": dataset_ref,
        },
        "rounds_to_consensus": result.rounds_to_consensus,
        "censored": result.censored,
        "final_accuracy": result.test_accuracy,
        "final_objective": result.final_objective,
    })
    with (out / "gadget_trace.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "max_pairwise_gap", "objective", "accuracy"])
        for t in range(len(result.max_pairwise_gap_trace)):
            writer.writerow([
                t + 1,
                repr(float(result.max_pairwise_gap_trace[t])),
                repr(float(result.objective_trace[t])),
                repr(float(result.accuracy_trace[t])),
            ])
    return 0


def _sweep_config(args, config):
    sizes = _parse_sizes(_setting(args, config, "sizes", required=True))
    p_in = float(_setting(args, config, "p_in", required=True))
    p_out_list = _setting(args, config, "p_out_list")
    if p_out_list is None:
        lo = float(_setting(args, config, "p_out_lo", required=True))
        hi = float(_setting(args, config, "p_out_hi", required=True))
        num = int(_setting(args, config, "p_out_num", required=True))
        p_out_list = bench.log_spaced(lo, hi, num)
    learning_rounds = _setting(args, config, "learning_rounds", default=200)
    return bench.SweepConfig(
        sizes=sizes,
        p_in=p_in,
        p_out_list=tuple(float(p) for p in p_out_list),
        seeds_per_point=int(_setting(args, config, "seeds_per_point", default=5)),
        epsilon=float(_setting(args, config, "epsilon", default=1e-10)),
        mode=str(_setting(args, config, "mode", default="scalar")),
        base_seed=int(_setting(args, config, "seed", default=_setting(args, config, "base_seed", default=0) or 0)),
        max_rounds=int(_setting(args, config, "max_rounds", default=200_000)),
        workers=int(_setting(args, config, "workers", default=1)),
        dataset_ref=_setting(args, config, "dataset"),
        nu=float(_setting(args, config, "nu", default=0.1)),
        steps_per_round=int(_setting(args, config, "steps_per_round", default=1)),
        learning_rounds=None if learning_rounds in (None, "none") else int(learning_rounds),
    )


def _cmd_sweep(args):
    config = _load_config(args.config) if args.config else {}
    cfg = _sweep_config(args, config)
    out = _out_dir(args, config)
    dataset = None
    if cfg.mode == "gadget":
        if cfg.dataset_ref is None:
            raise ValueError("gadget sweep requires a dataset setting")
        dataset = _resolve_dataset(cfg.dataset_ref, seed=cfg.base_seed)

    rows_path = out / "rows.csv"
    with rows_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(bench.CSV_HEADER)

        def emit(row):
            writer.writerow([
                repr(float(row.delta)),
                repr(float(row.p_out)),
                "" if row.tau_median is None else repr(float(row.tau_median)),
                "" if row.tau_iqr is None else repr(float(row.tau_iqr)),
                "" if row.lambda2_emp is None else repr(float(row.lambda2_emp)),
                repr(float(row.lambda2_pred)),
                repr(float(row.lambdaL)),
                str(int(row.censored)),
            ])
            fh.flush()

        rows = bench.sweep(cfg, dataset=dataset, row_callback=emit)
    failures = [r for r in rows if r.error is not None]
    bench.write_sidecar(cfg, out / "sweep.json", extra={
        "rows": len(rows),
        "failures": [r.error for r in failures],
        "accuracy_mean": [r.accuracy_mean for r in rows] if cfg.mode == "gadget" else None,
    })
    return 0


def _cmd_fit(args):
    config = _load_config(args.config) if args.config else {}
    rows_path = _setting(args, config, "rows", required=True)
    rows = bench.rows_from_csv(rows_path)
    fix_pole = _setting(args, config, "fix_pole")
    fit = bench.fit_reciprocal(rows, fix_pole=None if fix_pole is None else float(fix_pole))
    out = _out_dir(args, config)
    _write_json(out / "fit.json", {
        "a": fit.a, "c": fit.c, "rss": fit.rss, "r2": fit.r2, "pole_fixed": fit.pole_fixed,
    })
    return 0


def _cmd_bifurcation(args):
    config = _load_config(args.config) if args.config else {}
    sizes = _parse_sizes(_setting(args, config, "sizes", required=True))
    p_in = float(_setting(args, config, "p_in", required=True))
    grid_spec = _setting(args, config, "delta_grid", required=True)
    if isinstance(grid_spec, (list, tuple)):
        grid = [float(v) for v in grid_spec]
    else:
        lo, hi, num = str(grid_spec).split(":")
        grid = np.linspace(float(lo), float(hi), int(num)).tolist()
    delta1 = bench.detect_bifurcation(sizes, p_in, grid)
    out = _out_dir(args, config)
    _write_json(out / "bifurcation.json", {"delta1_star": delta1, "p_in": p_in, "sizes": list(sizes)})
    return 0


# ---------------------------------------------------------------- dispatch


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="netconsensus",
        description="Spectral prediction and consensus/gossip simulation over block-model networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key/value JSON config file")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="RNG seed")

    def model_flags(p):
        p.add_argument("--sizes", help="community sizes, e.g. 700,300")
        p.add_argument("--p-in", dest="p_in", type=float)
        p.add_argument("--p-out", dest="p_out", type=float)

    p = sub.add_parser("sample", help="sample a network and export it")
    common(p)
    model_flags(p)
    p.add_argument("--connected", action="store_true", help="resample until connected")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("spectrum", help="empirical normalized-Laplacian spectrum")
    common(p)
    model_flags(p)
    p.add_argument("--net", help="edge-list .txt or network .json to load")
    p.add_argument("--bins", type=int)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("predict", help="random-matrix spectral prediction")
    common(p)
    model_flags(p)
    p.add_argument("--eta", type=float)
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("consensus", help="scalar consensus run over one sample")
    common(p)
    model_flags(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.set_defaults(func=_cmd_consensus)

    p = sub.add_parser("gadget", help="decentralized SVM run over one sample")
    common(p)
    model_flags(p)
    p.add_argument("--dataset", help="sparse text path or blobs:N:D:MARGIN[:SEED]")
    p.add_argument("--nu", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--steps-per-round", dest="steps_per_round", type=int)
    p.add_argument("--learning-rounds", dest="learning_rounds")
    p.set_defaults(func=_cmd_gadget)

    p = sub.add_parser("sweep", help="community-strength sweep")
    common(p)
    model_flags(p)
    p.add_argument("--mode", choices=["scalar", "gadget"])
    p.add_argument("--seeds-per-point", dest="seeds_per_point", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--dataset")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="reciprocal-law fit of sweep rows")
    common(p)
    p.add_argument("--rows", help="rows.csv produced by sweep")
    p.add_argument("--fix-pole", dest="fix_pole", type=float)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("bifurcation", help="locate the spectral bifurcation")
    common(p)
    p.add_argument("--sizes")
    p.add_argument("--p-in", dest="p_in", type=float)
    p.add_argument("--delta-grid", dest="delta_grid", help="lo:hi:num")
    p.set_defaults(func=_cmd_bifurcation)

    return parser


def cli(argv=None) -> int:
    """Run one CLI invocation; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, bench.FitError, bench.BifurcationRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected failure path
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
