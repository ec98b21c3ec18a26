"""Label-leakage laboratory: GMRF features, crossed-chunk prediction
functionals, and empirical Rényi-divergence measurement.

Node features are drawn from a Gaussian Markov random field whose
precision is ``gmrf_alpha * I + gmrf_beta * N`` (N the symmetrically
normalized Laplacian), so conditioning on part of the graph leaves a
Gaussian law with covariance given by an inverse precision block.

Two scalar functionals describe the one-hop aggregated prediction of an
unlabeled probe node when the labeled set is split into two chunks:
the bagged functional pairs each chunk's features with the *other*
chunk's trained parameters (crossed), the unbagged functional uses
matched pairing.  Resampling chunk-two features from their conditional
law makes the bagged functional's output a noisy channel whose
Rényi divergence between adjacent datasets can be estimated by Gaussian
fits and compared against the order/(2*sigma^2) Gaussian-mechanism
bound; the unbagged functional is deterministic and its output gap
under record removal is reported directly.

Three quantities named ``alpha`` elsewhere collide here; this module
uses ``gmrf_alpha`` (noise level), ``order_a`` (divergence order), and
``step_size`` (never needed here) to keep them apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from graphstack.errors import ConfigError, NumericError
from graphstack.graph import Graph
from graphstack.kernels import KernelSpec, build_kernel
from graphstack.models import ModelSpec, train

CLIP_RANGE = 0.5  # enforced output range [-1/2, +1/2] when clipping is on


class GMRFModel:
    """Gaussian Markov random field over a graph's nodes.

    Precision ``gmrf_alpha * I + gmrf_beta * N`` with its lower
    Cholesky factor; ``gmrf_alpha > 0`` keeps it positive definite.
    """

    def __init__(self, graph: Graph, gmrf_alpha: float, gmrf_beta: float):
        if gmrf_alpha <= 0:
            raise ConfigError("gmrf_alpha must be positive")
        if gmrf_beta < 0:
            raise ConfigError("gmrf_beta must be nonnegative")
        self.graph = graph
        self.gmrf_alpha = float(gmrf_alpha)
        self.gmrf_beta = float(gmrf_beta)
        norm_lap = build_kernel(
            graph, KernelSpec("sym_norm_laplacian", "zero_row")).to_dense()
        self.precision = (gmrf_alpha * np.eye(graph.num_nodes)
                          + gmrf_beta * norm_lap)
        try:
            self.factor = np.linalg.cholesky(self.precision)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"precision factorization failed: {exc}") from exc

    def covariance(self) -> np.ndarray:
        """Dense inverse precision (small graphs; test oracle)."""
        identity = np.eye(self.graph.num_nodes)
        return np.linalg.solve(self.precision, identity)


def sample_gmrf(model: GMRFModel, num_samples: int, seed: int) -> np.ndarray:
    """Draw (num_samples, n) rows of N(0, precision^{-1}).

    Each row solves factor^T x = z for a standard normal z.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((model.graph.num_nodes, num_samples))
    x = solve_triangular(model.factor.T, z, lower=False)
    return x.T


def conditional_gaussian(model: GMRFModel, observed: dict):
    """Conditional law of the unobserved block given observed values.

    Returns ``(remaining_ids, mean, covariance)`` where the law is
    N(-Gamma_QQ^{-1} Gamma_QP z_P, Gamma_QQ^{-1}) by the precision-block
    identity.
    """
    n = model.graph.num_nodes
    p_ids = np.asarray(sorted(observed), dtype=np.int64)
    if p_ids.size == 0:
        raise ConfigError("need at least one observed node")
    if p_ids.size >= n:
        raise ConfigError("observed set must be a proper subset of the nodes")
    if p_ids.min() < 0 or p_ids.max() >= n:
        raise ConfigError("observed node id out of range")
    z_p = np.asarray([observed[int(i)] for i in p_ids], dtype=np.float64)
    q_ids = np.setdiff1d(np.arange(n, dtype=np.int64), p_ids)
    gamma_qq = model.precision[np.ix_(q_ids, q_ids)]
    gamma_qp = model.precision[np.ix_(q_ids, p_ids)]
    covariance = np.linalg.solve(gamma_qq, np.eye(q_ids.size))
    mean = -np.linalg.solve(gamma_qq, gamma_qp @ z_p)
    return q_ids, mean, covariance


def sample_conditional(model: GMRFModel, observed: dict, num_samples: int,
                       seed: int):
    """Draw (num_samples, |Q|) conditional samples; see conditional_gaussian."""
    q_ids, mean, _ = conditional_gaussian(model, observed)
    gamma_qq = model.precision[np.ix_(q_ids, q_ids)]
    factor = np.linalg.cholesky(gamma_qq)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((q_ids.size, num_samples))
    deviations = solve_triangular(factor.T, z, lower=False)
    return q_ids, mean + deviations.T


@dataclass(frozen=True)
class ChunkedData:
    """A labeled set split into two chunks, plus node features/labels."""

    features: np.ndarray   # (n,) scalar feature per node
    labels: np.ndarray     # (n,) regression target per node (labeled used)
    d1_ids: np.ndarray
    d2_ids: np.ndarray

    def __post_init__(self):
        overlap = np.intersect1d(self.d1_ids, self.d2_ids)
        if overlap.size:
            raise ConfigError(f"chunks overlap on nodes {overlap.tolist()}")

    def with_features(self, features) -> "ChunkedData":
        return ChunkedData(np.asarray(features, dtype=np.float64),
                           self.labels, self.d1_ids, self.d2_ids)

    def without_record(self, node_id: int) -> "ChunkedData":
        if node_id not in set(self.d1_ids.tolist()):
            raise ConfigError("only chunk-one records can be removed")
        d1 = self.d1_ids[self.d1_ids != node_id]
        return ChunkedData(self.features, self.labels, d1, self.d2_ids)


@dataclass(frozen=True)
class AdjacentPair:
    """Two datasets at Hamming distance one (a chunk-one record removed)."""

    data: ChunkedData
    data_prime: ChunkedData
    removed_id: int

    def __post_init__(self):
        if (self.data.d1_ids.shape[0] - self.data_prime.d1_ids.shape[0]) != 1:
            raise ConfigError("adjacent datasets must differ by one record")


def _fit_chunk(data: ChunkedData, ids, model_spec: ModelSpec):
    X = data.features[ids][:, None]
    y = data.labels[ids]
    return train(model_spec, X, y, task="regression")


def _clip(value: float, clip: bool) -> float:
    if not clip:
        return value
    return float(min(max(value, -CLIP_RANGE), CLIP_RANGE))


def _crossed_sum(x0, data, graph, model_spec, pair_with_other: bool,
                 clip: bool):
    if x0 in set(data.d1_ids.tolist()) or x0 in set(data.d2_ids.tolist()):
        raise ConfigError("the probe node must be unlabeled (outside both "
                          "chunks)")
    neighbors = set(graph.neighbors(x0).tolist())
    in_d1 = np.asarray([v for v in data.d1_ids if int(v) in neighbors],
                       dtype=np.int64)
    in_d2 = np.asarray([w for w in data.d2_ids if int(w) in neighbors],
                       dtype=np.int64)
    if in_d1.size == 0 and in_d2.size == 0:
        return 0.0, False
    theta1 = _fit_chunk(data, data.d1_ids, model_spec)
    theta2 = _fit_chunk(data, data.d2_ids, model_spec)
    model_for_d1 = theta2 if pair_with_other else theta1
    model_for_d2 = theta1 if pair_with_other else theta2
    total = 0.0
    if in_d1.size:
        preds = model_for_d1.predict(data.features[in_d1][:, None]).values
        total += float(preds.sum())
    if in_d2.size:
        preds = model_for_d2.predict(data.features[in_d2][:, None]).values
        total += float(preds.sum())
    return _clip(total, clip), True


def bagged_functional(x0: int, data: ChunkedData, graph: Graph,
                      model_spec: ModelSpec, clip: bool = False):
    """Crossed-pairing prediction sum at the probe node.

    Chunk-one neighbors are scored with chunk-two parameters and vice
    versa.  Returns ``(value, has_labeled_neighbors)``; the value is 0
    with a False flag when the probe has no labeled neighbors.
    """
    return _crossed_sum(x0, data, graph, model_spec, True, clip)


def unbagged_functional(x0: int, data: ChunkedData, graph: Graph,
                        model_spec: ModelSpec, clip: bool = False):
    """Matched-pairing variant: each chunk scored with its own parameters."""
    return _crossed_sum(x0, data, graph, model_spec, False, clip)


def renyi_divergence_gaussians(mean0, var0, mean1, var1, order_a) -> float:
    """Closed-form order-a Rényi divergence D_a(N(mean0,var0) || N(mean1,var1)).

    Infinite when the order-weighted variance (1-a)var0 + a*var1 is not
    positive.
    """
    if order_a <= 1:
        raise ConfigError("divergence order must exceed 1")
    if var0 <= 0 or var1 <= 0:
        raise ConfigError("variances must be positive")
    var_a = (1.0 - order_a) * var0 + order_a * var1
    if var_a <= 0:
        return math.inf
    gap = order_a * (mean0 - mean1) ** 2 / (2.0 * var_a)
    log_term = (math.log(math.sqrt(var_a))
                - (1.0 - order_a) * 0.5 * math.log(var0)
                - order_a * 0.5 * math.log(var1)) / (1.0 - order_a)
    value = gap + log_term
    return max(value, 0.0)


@dataclass(frozen=True)
class LeakageReport:
    """Outcome of one adjacent-dataset experiment."""

    epsilon_hat: float
    epsilon_bound: float
    sigma_sq: float
    unbagged_gap: float
    order_a: float
    trials: int
    x0: int
    removed_id: int
    mean_d: float
    var_d: float
    mean_dprime: float
    var_dprime: float
    cond_variance_diagonal: tuple
    degenerate: bool
    samples_d: np.ndarray | None = field(default=None, repr=False)
    samples_dprime: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "epsilon_hat": self.epsilon_hat,
            "epsilon_bound": self.epsilon_bound,
            "sigma_sq": self.sigma_sq,
            "unbagged_gap": self.unbagged_gap,
            "order_a": self.order_a,
            "trials": self.trials,
            "x0": self.x0,
            "removed_id": self.removed_id,
            "mean_d": self.mean_d,
            "var_d": self.var_d,
            "mean_dprime": self.mean_dprime,
            "var_dprime": self.var_dprime,
            "cond_variance_diagonal": list(self.cond_variance_diagonal),
            "degenerate": self.degenerate,
        }


def make_adjacent_pair(graph: Graph, gmrf: GMRFModel, seed: int,
                       remove_neighbor: bool = True) -> tuple:
    """Construct a probe node, chunks, and an adjacent dataset pair.

    The probe is the highest-degree node; its lowest-id neighbor joins
    chunk one, the remaining neighbors form chunk two, and every other
    node is a chunk-one member.  Chunk two therefore sits entirely in
    the probe's neighborhood, which is the regime where its conditional
    feature noise reaches the probe.  The removed record is the probe's
    chunk-one neighbor, or (with ``remove_neighbor=False``) the lowest-id
    chunk-one node not adjacent to the probe.
    """
    degrees = graph.degrees
    if degrees.max() < 2:
        raise ConfigError("probe node needs at least two neighbors")
    x0 = int(degrees.argmax())
    neighbors = graph.neighbors(x0)
    d1_neighbor = int(neighbors[0])
    d2 = np.asarray(neighbors[1:], dtype=np.int64)
    all_ids = np.arange(graph.num_nodes, dtype=np.int64)
    d1 = np.setdiff1d(all_ids, np.concatenate([[x0], d2]))
    if remove_neighbor:
        removed_id = d1_neighbor
    else:
        outside = [int(v) for v in d1 if int(v) != d1_neighbor]
        if not outside:
            raise ConfigError("no chunk-one node outside the neighborhood")
        removed_id = outside[0]
    rng = np.random.default_rng(seed)
    base_features = sample_gmrf(gmrf, 1, seed)[0]
    labels = rng.standard_normal(graph.num_nodes)
    data = ChunkedData(base_features, labels, d1, d2)
    pair = AdjacentPair(data, data.without_record(removed_id), removed_id)
    return x0, pair


def leakage_experiment(graph: Graph, gmrf: GMRFModel, model_spec: ModelSpec,
                       order_a: float, trials: int, seed: int,
                       clip: bool = True, keep_samples: bool = False,
                       remove_neighbor: bool = True) -> LeakageReport:
    """Estimate the bagged functional's Rényi divergence under record removal.

    Chunk-two features are resampled from their conditional law given
    every other node's features (the randomness source of the bagged
    functional); the functional's outputs under the dataset and its
    adjacent variant are fitted as Gaussians whose closed-form order-a
    divergence is the estimate.  The bound is order_a / (2 sigma^2) with
    sigma^2 the largest conditional variance in the chunk-two block (the
    conservative choice; the full diagonal is reported).
    """
    if trials < 1000:
        raise ConfigError("need at least 1000 trials for stable fits")
    x0, pair = make_adjacent_pair(graph, gmrf, seed,
                                  remove_neighbor=remove_neighbor)
    d2 = pair.data.d2_ids
    observed = {int(i): float(pair.data.features[i])
                for i in range(graph.num_nodes) if i not in set(d2.tolist())}
    q_ids, _, cond_cov = conditional_gaussian(gmrf, observed)
    if not np.array_equal(q_ids, np.sort(d2)):
        raise NumericError("conditional block does not match chunk two")
    diag = cond_cov.diagonal()
    sigma_sq = float(diag.max())
    epsilon_bound = order_a / (2.0 * sigma_sq)

    def run_trials(data: ChunkedData, sub_seed: int) -> np.ndarray:
        _, draws = sample_conditional(gmrf, observed, trials, sub_seed)
        values = np.empty(trials)
        features = np.array(data.features)
        for t in range(trials):
            features[q_ids] = draws[t]
            value, _ = bagged_functional(x0, data.with_features(features),
                                         graph, model_spec, clip=clip)
            values[t] = value
        return values

    samples_d = run_trials(pair.data, seed * 2 + 1)
    samples_dprime = run_trials(pair.data_prime, seed * 2 + 2)
    mean_d, var_d = float(samples_d.mean()), float(samples_d.var(ddof=1))
    mean_dp, var_dp = (float(samples_dprime.mean()),
                       float(samples_dprime.var(ddof=1)))
    degenerate = var_d <= 1e-14 or var_dp <= 1e-14
    if degenerate:
        epsilon_hat = math.inf if abs(mean_d - mean_dp) > 0 else 0.0
    else:
        epsilon_hat = renyi_divergence_gaussians(mean_d, var_d, mean_dp,
                                                 var_dp, order_a)
    gap_d, _ = unbagged_functional(x0, pair.data, graph, model_spec, clip=clip)
    gap_dp, _ = unbagged_functional(x0, pair.data_prime, graph, model_spec,
                                    clip=clip)
    return LeakageReport(
        epsilon_hat=float(epsilon_hat), epsilon_bound=float(epsilon_bound),
        sigma_sq=sigma_sq, unbagged_gap=abs(gap_d - gap_dp),
        order_a=float(order_a), trials=int(trials), x0=x0,
        removed_id=pair.removed_id, mean_d=mean_d, var_d=var_d,
        mean_dprime=mean_dp, var_dprime=var_dp,
        cond_variance_diagonal=tuple(float(v) for v in diag),
        degenerate=degenerate,
        samples_d=samples_d if keep_samples else None,
        samples_dprime=samples_dprime if keep_samples else None)


def random_leak_graph(seed: int, num_nodes: int = 12,
                      edge_prob: float = 0.35) -> Graph:
    """Random connected-ish test graph with a well-connected probe node.

    A cycle backbone plus random extra edges; the highest-degree node is
    then wired to at least four others so the probe neighborhood is
    nontrivial.
    """
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % num_nodes) for i in range(num_nodes)]
    for u in range(num_nodes):
        for v in range(u + 1, num_nodes):
            if rng.random() < edge_prob:
                edges.append((u, v))
    graph = Graph.from_edges(num_nodes, edges)
    hub = int(graph.degrees.argmax())
    extra = [v for v in range(num_nodes) if v != hub][:6]
    for v in extra:
        if graph.degrees[hub] >= 5:
            break
        if v not in set(graph.neighbors(hub).tolist()):
            edges.append((hub, v))
            graph = Graph.from_edges(num_nodes, edges)
    return graph
