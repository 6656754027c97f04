"""Gossip-based decentralized SVM: local subgradient steps + push-sum mixing.

Each node runs hinge-loss subgradient descent on its shard while weights are
exchanged through the mass-conserving push-sum protocol: every node splits
its (sum, weight) pair equally over itself and its neighbors each round, so
the mixing matrix is column-stochastic and the totals are invariants. A run
stops once all pairwise weight-vector distances fall below the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial.distance import pdist

from .data import LabeledDataset, partition_equal, train_test_split
from .sbm import Network, SbmModel, is_connected, sample_connected

__all__ = [
    "NodeState",
    "GadgetConfig",
    "GadgetRun",
    "pegasos_step",
    "push_sum_round",
    "mixing_matrix",
    "run_gadget",
    "hinge_objective",
    "accuracy",
    "max_pairwise_gap",
]


@dataclass(eq=False)
class NodeState:
    """Per-node learning and push-sum state.

    w is the working weight vector; (s, psw) is the push-sum pair whose ratio
    is the node's current estimate of the network average.
    """

    w: np.ndarray
    s: np.ndarray
    psw: float
    local_indices: np.ndarray
    rng: np.random.Generator
    step_count: int = 0

    @property
    def estimate(self) -> np.ndarray:
        return self.s / self.psw


@dataclass
class GadgetConfig:
    """Knobs for a decentralized SVM run.

    learning_rounds bounds how many rounds include local subgradient steps;
    None keeps learning on every round, but the 1/(nu*t) step size then
    injects fresh disagreement each round and tiny epsilon targets become
    unreachable, so sweeps use a finite budget and let pure gossip close the
    remaining gap. adopt_each_round controls whether nodes take s/psw as
    their working weights after every mixing (default) or keep learning on
    their raw local weights.
    """

    nu: float
    epsilon: float
    max_rounds: int
    steps_per_round: int = 1
    learning_rounds: int | None = 200
    adopt_each_round: bool = True
    seed: int = 0
    test_fraction: float = 0.25
    record_trace: bool = True

    def __post_init__(self) -> None:
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(eq=False)
class GadgetRun:
    """Outcome of one decentralized run."""

    rounds_to_consensus: int | None
    censored: bool
    max_pairwise_gap_trace: np.ndarray
    objective_trace: np.ndarray
    accuracy_trace: np.ndarray
    test_accuracy: float
    final_objective: float
    final_weights: np.ndarray
    node_weights: np.ndarray | None = None
    sample_attempts: int = 1
    config: GadgetConfig | None = None


def _feature_row(X, i: int) -> np.ndarray:
    if sparse.issparse(X):
        return np.asarray(X[i].todense()).ravel()
    return np.asarray(X[i], dtype=float)


def _subgradient_update(w, X, y, shard, rng, nu, t) -> None:
    """One hinge subgradient step on w (in place) with step size 1/(nu*t)."""
    pick = int(rng.integers(shard.size))
    gi = int(shard[pick])
    x = _feature_row(X, gi)
    y_i = float(y[gi])
    eta = 1.0 / (nu * t)
    margin = y_i * float(w @ x)
    w *= 1.0 - eta * nu
    if margin < 1.0:
        w += (eta * y_i) * x


def pegasos_step(state: NodeState, X, y, nu: float, t: int | None = None) -> NodeState:
    """One stochastic subgradient step on the node's shard, in place.

    Picks a local example uniformly at random, applies the learning rate
    1/(nu*t) to the subgradient nu*w - 1[y <w,x> < 1] y x, and advances the
    node's step counter.
    """
    if state.local_indices.size == 0:
        raise ValueError("node has no local examples")
    if t is None:
        t = state.step_count + 1
    if t < 1:
        raise ValueError("step index t must be >= 1")
    _subgradient_update(state.w, X, y, state.local_indices, state.rng, nu, t)
    state.step_count = t
    return state


def mixing_matrix(net: Network) -> sparse.csr_matrix:
    """Column-stochastic push-sum matrix: equal split over self and neighbors."""
    n = net.n
    adj = net.adjacency()
    with_self = (adj + sparse.identity(n, format="csr")).tocsr()
    inv_share = 1.0 / (net.degrees.astype(float) + 1.0)
    mix = (with_self @ sparse.diags(inv_share)).tocsr()
    mix.sort_indices()
    return mix


def push_sum_round(states, net: Network, mix: sparse.csr_matrix | None = None):
    """One synchronous push-sum exchange over the network, in place.

    Every node splits (s, psw) into equal shares over itself and its
    neighbors; the new pair is the sum of shares received. Totals of s and
    psw are conserved up to round-off. Only the push-sum pair moves; working
    weights w are untouched.
    """
    if mix is None:
        mix = mixing_matrix(net)
    stacked = np.stack([st.s for st in states])
    psw = np.array([st.psw for st in states], dtype=float)
    mixed = mix @ stacked
    psw_new = mix @ psw
    for i, st in enumerate(states):
        st.s = mixed[i]
        st.psw = float(psw_new[i])
    return states


def hinge_objective(w: np.ndarray, X, y, nu: float, n_nodes: int) -> float:
    """Regularized hinge objective: summed losses over all shards divided by
    the node count, plus (nu/2) ||w||^2."""
    scores = X @ w
    hinge = np.maximum(0.0, 1.0 - y * scores)
    return float(hinge.sum() / n_nodes + 0.5 * nu * float(w @ w))


def accuracy(w: np.ndarray, X, y) -> float:
    scores = X @ w
    pred = np.where(scores >= 0.0, 1, -1)
    return float(np.mean(pred == y))


def max_pairwise_gap(weights: np.ndarray) -> float:
    """Exact max over node pairs of ||w_i - w_j||_2.

    Differences are formed before squaring: a Gram-matrix expansion loses
    the gap entirely once it sits below the float precision of ||w||^2.
    """
    if weights.shape[0] < 2:
        return 0.0
    return float(pdist(weights).max())


def run_gadget(
    model,
    dataset: LabeledDataset,
    cfg: GadgetConfig,
    test_dataset: LabeledDataset | None = None,
) -> GadgetRun:
    """Synchronous decentralized SVM over a sampled (or given) network.

    Each round: steps_per_round local subgradient steps per node (while the
    learning budget lasts), then the working weights enter the push-sum pair,
    one mixing exchange runs, and nodes adopt s/psw as their new weights.
    Stops when the exact max pairwise weight gap drops below epsilon, or
    reports a censored run at max_rounds. Accepts an SbmModel (sampled until
    connected, deterministically per its seed) or a prebuilt Network.
    """
    if isinstance(model, SbmModel):
        net, attempts = sample_connected(model)
    else:
        net, attempts = model, 1
        if not is_connected(net):
            raise ValueError("run_gadget requires a connected network")
    n = net.n

    root = np.random.SeedSequence(cfg.seed)
    split_seed, part_seed, node_root = root.spawn(3)
    if test_dataset is None:
        train, test = train_test_split(
            dataset, cfg.test_fraction, seed=int(split_seed.generate_state(1)[0])
        )
    else:
        train, test = dataset, test_dataset
    if train.n_examples < n:
        raise ValueError(
            f"dataset has {train.n_examples} examples for {n} nodes; every shard must be nonempty"
        )
    shards = partition_equal(train, n, seed=int(part_seed.generate_state(1)[0])).shards
    rngs = [np.random.default_rng(stream) for stream in node_root.spawn(n)]

    d = train.d
    weights = np.zeros((n, d))
    psw = np.ones(n)
    step_counts = np.zeros(n, dtype=np.int64)
    mix = mixing_matrix(net)
    X_train, y_train = train.X, train.y
    X_test, y_test = test.X, test.y

    gap_trace, obj_trace, acc_trace = [], [], []
    rounds_done = None
    w_avg = weights.sum(axis=0) / n
    for t_round in range(1, cfg.max_rounds + 1):
        learning = cfg.learning_rounds is None or t_round <= cfg.learning_rounds
        if learning:
            for i in range(n):
                row = weights[i]
                for _ in range(cfg.steps_per_round):
                    step_counts[i] += 1
                    _subgradient_update(row, X_train, y_train, shards[i], rngs[i], cfg.nu, int(step_counts[i]))
        # working weights enter the push-sum pair, then one exchange
        sums = mix @ (weights * psw[:, None])
        psw = mix @ psw
        if cfg.adopt_each_round:
            weights = sums / psw[:, None]
        gap = max_pairwise_gap(weights)
        w_avg = sums.sum(axis=0) / psw.sum()
        if cfg.record_trace:
            gap_trace.append(gap)
            obj_trace.append(hinge_objective(w_avg, X_train, y_train, cfg.nu, n))
            acc_trace.append(accuracy(w_avg, X_test, y_test))
        if gap < cfg.epsilon:
            rounds_done = t_round
            break

    return GadgetRun(
        rounds_to_consensus=rounds_done,
        censored=rounds_done is None,
        max_pairwise_gap_trace=np.asarray(gap_trace),
        objective_trace=np.asarray(obj_trace),
        accuracy_trace=np.asarray(acc_trace),
        test_accuracy=accuracy(w_avg, X_test, y_test),
        final_objective=hinge_objective(w_avg, X_train, y_train, cfg.nu, n),
        final_weights=w_avg,
        node_weights=weights,
        sample_attempts=attempts,
        config=cfg,
    )
