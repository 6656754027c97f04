"""Experiment harness: community-strength sweeps, reciprocal-law fits, and
spectral-bifurcation detection.

A sweep fixes sizes and the within-community probability, walks a list of
between-community probabilities, and for each point runs the random-matrix
prediction once plus several seeded simulations (scalar consensus or the
decentralized SVM). Rows aggregate medians/IQRs so a stray near-bipartite
sample cannot skew a point.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import consensus, gossip, rmt, spectra
from .data import LabeledDataset
from .sbm import TwoLevelProbs, make_two_level_model, sample_connected

__all__ = [
    "SweepConfig",
    "SweepRow",
    "ReciprocalFit",
    "FitError",
    "BifurcationRangeError",
    "sweep",
    "fit_reciprocal",
    "fit_inverse_lambda2",
    "detect_bifurcation",
    "log_spaced",
    "rows_to_csv",
    "rows_from_csv",
    "write_sidecar",
]

CSV_HEADER = ["delta", "p_out", "tau_median", "tau_iqr", "lambda2_emp", "lambda2_pred", "lambdaL", "censored"]


class FitError(ValueError):
    """Fit rejected: too little data or pole inside the data range."""


class BifurcationRangeError(RuntimeError):
    """Every grid point sits in the same regime; no bifurcation to bracket."""


@dataclass
class SweepConfig:
    """One sweep specification.

    p_out_list values must lie in (0, p_in]. mode is "scalar" (consensus of
    random scalars) or "gadget" (decentralized SVM; pass the dataset to
    sweep() and record its origin in dataset_ref).
    """

    sizes: tuple
    p_in: float
    p_out_list: tuple
    seeds_per_point: int
    epsilon: float
    mode: str = "scalar"
    base_seed: int = 0
    max_rounds: int = 200_000
    workers: int = 1
    dataset_ref: str | None = None
    nu: float = 0.1
    steps_per_round: int = 1
    learning_rounds: int | None = 200
    out_dir: str | None = None

    def __post_init__(self) -> None:
        self.sizes = tuple(int(s) for s in self.sizes)
        self.p_out_list = tuple(float(p) for p in self.p_out_list)
        if self.mode not in ("scalar", "gadget"):
            raise ValueError(f"mode must be 'scalar' or 'gadget', got {self.mode!r}")
        if self.seeds_per_point < 1:
            raise ValueError("seeds_per_point must be >= 1")
        for p in self.p_out_list:
            if not 0.0 < p <= self.p_in:
                raise ValueError(f"p_out={p} outside (0, p_in={self.p_in}]")


@dataclass
class SweepRow:
    """Aggregated result at one community-strength point."""

    delta: float
    p_out: float
    tau_median: float | None
    tau_iqr: float | None
    lambda2_emp: float | None
    lambda2_pred: float
    lambdaL: float
    censored: int
    n_runs: int = 0
    accuracy_mean: float | None = None
    error: str | None = None


@dataclass
class ReciprocalFit:
    """Least-squares fit of tau = a / (c - delta)."""

    a: float
    c: float
    rss: float
    r2: float
    pole_fixed: bool


def log_spaced(lo: float, hi: float, num: int):
    """Log-spaced grid, inclusive of both endpoints."""
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    return tuple(np.logspace(math.log10(lo), math.log10(hi), num).tolist())


def _point_seeds(base_seed: int, num_points: int, seeds_per_point: int):
    """Seed table derived once so results are independent of worker count."""
    root = np.random.SeedSequence(base_seed)
    points = root.spawn(num_points)
    return [[int(s.generate_state(1)[0]) for s in p.spawn(seeds_per_point + 1)] for p in points]


def _scalar_point(cfg: SweepConfig, p_out: float, seeds) -> SweepRow:
    probs = TwoLevelProbs(cfg.p_in, p_out)
    model = make_two_level_model(cfg.sizes, probs, seeds[0])
    pred = rmt.predict(model, with_density=False)
    taus, lam2s = [], []
    censored = 0
    for run_seed in seeds[1:]:
        net, _ = sample_connected(model.with_seed(run_seed))
        lam2s.append(spectra.lambda2_only(net))
        x0 = consensus.random_initial_state(net.n, run_seed)
        result = consensus.run(net, x0, cfg.epsilon, max_rounds=cfg.max_rounds)
        if result.censored:
            censored += 1
        else:
            taus.append(result.tau_eps)
    return _aggregate_row(probs, pred, taus, lam2s, censored, len(seeds) - 1)


def _gadget_point(cfg: SweepConfig, p_out: float, seeds, dataset: LabeledDataset) -> SweepRow:
    probs = TwoLevelProbs(cfg.p_in, p_out)
    model = make_two_level_model(cfg.sizes, probs, seeds[0])
    pred = rmt.predict(model, with_density=False)
    taus, lam2s, accs = [], [], []
    censored = 0
    for run_seed in seeds[1:]:
        run_model = model.with_seed(run_seed)
        net, _ = sample_connected(run_model)
        lam2s.append(spectra.lambda2_only(net))
        gcfg = gossip.GadgetConfig(
            nu=cfg.nu,
            epsilon=cfg.epsilon,
            max_rounds=cfg.max_rounds,
            steps_per_round=cfg.steps_per_round,
            learning_rounds=cfg.learning_rounds,
            seed=run_seed,
            record_trace=False,
        )
        result = gossip.run_gadget(net, dataset, gcfg)
        accs.append(result.test_accuracy)
        if result.censored:
            censored += 1
        else:
            taus.append(result.rounds_to_consensus)
    row = _aggregate_row(probs, pred, taus, lam2s, censored, len(seeds) - 1)
    row.accuracy_mean = float(np.mean(accs)) if accs else None
    return row


def _aggregate_row(probs, pred, taus, lam2s, censored, n_runs) -> SweepRow:
    return SweepRow(
        delta=probs.delta,
        p_out=probs.p_out,
        tau_median=float(np.median(taus)) if taus else None,
        tau_iqr=float(np.percentile(taus, 75) - np.percentile(taus, 25)) if taus else None,
        lambda2_emp=float(np.mean(lam2s)) if lam2s else None,
        lambda2_pred=float(pred.predicted_lambda2),
        lambdaL=float(pred.support[0]),
        censored=censored,
        n_runs=n_runs,
    )


def sweep(cfg: SweepConfig, dataset: LabeledDataset | None = None, row_callback=None):
    """Run every point of the sweep; rows come back in config order.

    Per-point failures are recorded in the row's error field and never abort
    the sweep. row_callback, when given, receives each finished row in order
    (useful for incremental CSV writing).
    """
    if cfg.mode == "gadget" and dataset is None:
        raise ValueError("gadget mode requires a dataset")
    seeds_table = _point_seeds(cfg.base_seed, len(cfg.p_out_list), cfg.seeds_per_point)

    def job(idx_pout):
        idx, p_out = idx_pout
        try:
            if cfg.mode == "scalar":
                return _scalar_point(cfg, p_out, seeds_table[idx])
            return _gadget_point(cfg, p_out, seeds_table[idx], dataset)
        except Exception as exc:  # per-point isolation
            return SweepRow(
                delta=cfg.p_in - p_out, p_out=p_out, tau_median=None, tau_iqr=None,
                lambda2_emp=None, lambda2_pred=float("nan"), lambdaL=float("nan"),
                censored=0, n_runs=0, error=f"{type(exc).__name__}: {exc}",
            )

    jobs = list(enumerate(cfg.p_out_list))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(job, jobs))
    else:
        rows = [job(j) for j in jobs]
    if row_callback is not None:
        for row in rows:
            row_callback(row)
    return rows


def _fit_with_pole(deltas, taus, c):
    u = 1.0 / (c - deltas)
    a = float((taus @ u) / (u @ u))
    rss = float(np.sum((taus - a * u) ** 2))
    return a, rss


def fit_reciprocal(rows, fix_pole: float | None = None) -> ReciprocalFit:
    """Least squares of tau against a / (c - delta).

    rows may be SweepRow objects (censored-only rows are skipped) or a
    (deltas, taus) pair of arrays. With fix_pole the problem reduces to a
    one-parameter linear fit; otherwise the pole is located by golden-section
    search over c with the inner linear solve, constrained right of the data.
    """
    if isinstance(rows, tuple) and len(rows) == 2:
        deltas = np.asarray(rows[0], dtype=float)
        taus = np.asarray(rows[1], dtype=float)
    else:
        usable = [r for r in rows if r.tau_median is not None and r.error is None]
        deltas = np.array([r.delta for r in usable], dtype=float)
        taus = np.array([r.tau_median for r in usable], dtype=float)
    if deltas.size < 3:
        raise FitError(f"need >= 3 uncensored rows, got {deltas.size}")
    d_max = float(deltas.max())
    tss = float(np.sum((taus - taus.mean()) ** 2))

    if fix_pole is not None:
        c = float(fix_pole)
        if c <= d_max:
            raise FitError(f"fixed pole {c} is not right of the data (max delta {d_max})")
        a, rss = _fit_with_pole(deltas, taus, c)
        return ReciprocalFit(a=a, c=c, rss=rss, r2=_r2(rss, tss), pole_fixed=True)

    span = max(d_max - float(deltas.min()), 1e-6)
    lo = d_max + 1e-9
    hi = d_max + 10.0 * span + 1.0
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    c1 = hi - phi * (hi - lo)
    c2 = lo + phi * (hi - lo)
    f1 = _fit_with_pole(deltas, taus, c1)[1]
    f2 = _fit_with_pole(deltas, taus, c2)[1]
    while hi - lo > 1e-12 * max(1.0, hi):
        if f1 < f2:
            hi, c2, f2 = c2, c1, f1
            c1 = hi - phi * (hi - lo)
            f1 = _fit_with_pole(deltas, taus, c1)[1]
        else:
            lo, c1, f1 = c1, c2, f2
            c2 = lo + phi * (hi - lo)
            f2 = _fit_with_pole(deltas, taus, c2)[1]
    c = 0.5 * (lo + hi)
    a, rss = _fit_with_pole(deltas, taus, c)
    return ReciprocalFit(a=a, c=c, rss=rss, r2=_r2(rss, tss), pole_fixed=False)


def _r2(rss: float, tss: float) -> float:
    if tss == 0.0:
        return 1.0 if rss < 1e-30 else float("-inf")
    return 1.0 - rss / tss


def fit_inverse_lambda2(lambda2_values, taus) -> ReciprocalFit:
    """Fit tau = b / lambda2 with the same machinery (pole fixed at 0 in the
    negated coordinate)."""
    lam = np.asarray(lambda2_values, dtype=float)
    return fit_reciprocal((-lam, np.asarray(taus, dtype=float)), fix_pole=0.0)


def detect_bifurcation(sizes, p_in: float, delta_grid, refine_tol: float = 1e-4) -> float:
    """Largest community strength at which the isolated eigenvalue is still
    merged with the bulk, refined by bisection to refine_tol.

    The grid must be ascending and straddle both regimes; a grid entirely in
    one regime raises BifurcationRangeError.
    """
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("delta_grid must be strictly ascending")
    if grid.min() < 0 or grid.max() >= p_in:
        raise ValueError("delta values must lie in [0, p_in)")

    def merged(delta: float) -> bool:
        model = make_two_level_model(sizes, TwoLevelProbs(p_in, p_in - delta), seed=0)
        pred = rmt.predict(model, with_density=False)
        return pred.diagnostics.get("lambda2_source") == "bulk_edge"

    flags = [merged(d) for d in grid]
    if all(flags):
        raise BifurcationRangeError("grid entirely in the merged regime")
    if not any(flags):
        raise BifurcationRangeError("grid entirely in the separated regime")
    i_last = max(i for i, f in enumerate(flags) if f)
    if i_last == len(flags) - 1:
        raise BifurcationRangeError("merged regime extends past the top of the grid")

    lo, hi = float(grid[i_last]), float(grid[i_last + 1])
    while hi - lo > refine_tol:
        mid = 0.5 * (lo + hi)
        if merged(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rows_to_csv(rows, path) -> None:
    """Write the fixed row schema; extra fields live in the JSON sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([
                repr(float(r.delta)),
                repr(float(r.p_out)),
                "" if r.tau_median is None else repr(float(r.tau_median)),
                "" if r.tau_iqr is None else repr(float(r.tau_iqr)),
                "" if r.lambda2_emp is None else repr(float(r.lambda2_emp)),
                repr(float(r.lambda2_pred)),
                repr(float(r.lambdaL)),
                str(int(r.censored)),
            ])


def rows_from_csv(path):
    """Read rows written by rows_to_csv."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                SweepRow(
                    delta=float(rec["delta"]),
                    p_out=float(rec["p_out"]),
                    tau_median=float(rec["tau_median"]) if rec["tau_median"] else None,
                    tau_iqr=float(rec["tau_iqr"]) if rec["tau_iqr"] else None,
                    lambda2_emp=float(rec["lambda2_emp"]) if rec["lambda2_emp"] else None,
                    lambda2_pred=float(rec["lambda2_pred"]),
                    lambdaL=float(rec["lambdaL"]),
                    censored=int(rec["censored"]),
                )
            )
    return rows


def write_sidecar(cfg: SweepConfig, path, extra=None) -> None:
    """JSON sidecar with the full config and provenance (timestamp lives
    here, never in the data CSV)."""
    import datetime

    from . import __version__

    doc = {
        "config": dataclasses.asdict(cfg),
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))
