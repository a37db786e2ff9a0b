"""Tree search over a planning model: PUCT selection, expansion, TD backup.

The search is generic over a `planner` adapter, which supplies root/child
evaluations. The learned world model and the oracle true-environment adapter
(used by equivalence tests) both implement that interface, so this file owns
only tree mechanics: statistics, selection, backup, root noise, and the
visit-count policy.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SearchConfig:
    num_simulations: int = 50
    c1: float = 1.25
    c2: float = 19652.0
    discount: float = 0.997
    dirichlet_alpha: float = 0.3
    noise_weight: float = 0.25
    temperature: float = 0.25
    normalize_q: bool = True
    continuous: bool = False
    num_sampled_actions: int = 20

    def validate(self):
        if self.num_simulations < 1:
            raise ValueError("num_simulations must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        if self.continuous and self.num_sampled_actions < 2:
            raise ValueError("continuous search needs at least 2 sampled actions")
        return self


class EdgeStats:
    """Statistics of one (node, action) edge."""

    __slots__ = ("action", "prior", "visit_count", "value_sum", "reward", "child")

    def __init__(self, action, prior):
        self.action = action
        self.prior = float(prior)
        self.visit_count = 0
        self.value_sum = 0.0
        self.reward = 0.0
        self.child = None

    @property
    def q(self):
        return 0.0 if self.visit_count == 0 else self.value_sum / self.visit_count


class SearchNode:
    __slots__ = ("payload", "edges", "depth", "terminal", "visit_count")

    def __init__(self, payload, actions, priors, depth, terminal=False):
        self.payload = payload
        self.edges = [EdgeStats(a, p) for a, p in zip(actions, priors)]
        self.depth = depth
        self.terminal = terminal
        self.visit_count = 1  # the expansion visit

    @property
    def expanded(self):
        return bool(self.edges)


class MinMaxStats:
    """Running value bounds for optional Q normalization across the tree."""

    def __init__(self):
        self.lo = math.inf
        self.hi = -math.inf

    def update(self, q):
        self.lo = min(self.lo, q)
        self.hi = max(self.hi, q)

    def normalize(self, q):
        if self.hi > self.lo:
            return (q - self.lo) / (self.hi - self.lo)
        return q


def puct_scores(visit_counts, priors, q_values, c1=1.25, c2=19652.0):
    """Selection scores: Q + P * sqrt(sum N)/(1+N) * (c1 + log((sum N + c2 + 1)/c2))."""
    n = np.asarray(visit_counts, dtype=np.float64)
    p = np.asarray(priors, dtype=np.float64)
    q = np.asarray(q_values, dtype=np.float64)
    total = n.sum()
    weight = math.sqrt(total) / (1.0 + n) * (c1 + math.log((total + c2 + 1.0) / c2))
    return q + p * weight


def select_child(node, cfg, minmax=None):
    """Index of the PUCT-argmax edge; ties go to larger prior, then lower index."""
    if not node.expanded:
        raise ValueError("select_child on an unexpanded node")
    n = np.array([e.visit_count for e in node.edges], dtype=np.float64)
    p = np.array([e.prior for e in node.edges], dtype=np.float64)
    if cfg.normalize_q and minmax is not None:
        q = np.array([minmax.normalize(e.q) if e.visit_count else 0.0 for e in node.edges])
    else:
        q = np.array([e.q for e in node.edges], dtype=np.float64)
    scores = puct_scores(n, p, q, cfg.c1, cfg.c2)
    return max(range(len(node.edges)), key=lambda i: (scores[i], p[i], -i))


def backup(path, leaf_value, cfg, minmax):
    """Propagate the TD-bootstrapped return up the selection path.

    Each edge at depth k receives G_k = r_k + discount * G_{k+1} with
    G_l = leaf_value, i.e. the discounted reward sum plus discounted bootstrap.
    """
    g = float(leaf_value)
    for node, edge in reversed(path):
        g = edge.reward + cfg.discount * g
        edge.value_sum += g
        edge.visit_count += 1
        node.visit_count += 1
        minmax.update(edge.q)


def apply_root_noise(root, cfg, rng):
    """Mix Dirichlet noise into root priors: P' = (1-w) P + w eta."""
    if not root.expanded:
        raise ValueError("root must be expanded before noise")
    eta = rng.dirichlet(np.full(len(root.edges), cfg.dirichlet_alpha))
    for edge, e in zip(root.edges, eta):
        edge.prior = (1.0 - cfg.noise_weight) * edge.prior + cfg.noise_weight * float(e)
    return root


def improved_policy(visit_counts, temperature):
    """Normalized N^(1/T); T = 0 degenerates to argmax (ties to lowest index)."""
    n = np.asarray(visit_counts, dtype=np.float64)
    total = n.sum()
    if total <= 0:
        raise ValueError("improved_policy needs at least one visit")
    if temperature == 0.0:
        out = np.zeros_like(n)
        out[int(np.argmax(n))] = 1.0
        return out
    logits = np.where(n > 0, np.log(np.maximum(n, 1e-300)) / temperature, -np.inf)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def sample_continuous_actions(mu, sigma, k, rng):
    """K i.i.d. Gaussian proposals with uniform priors and their densities."""
    if k < 2:
        raise ValueError("need at least 2 sampled actions")
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    actions = rng.normal(mu, sigma, size=(k, mu.size))
    log_dens = (-0.5 * ((actions - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * math.log(2 * math.pi)).sum(axis=1)
    priors = np.full(k, 1.0 / k)
    return actions, priors, np.exp(log_dens)


@dataclass
class SearchResult:
    policy: np.ndarray          # over action indices (discrete) or sampled slots (continuous)
    actions: list               # edge actions, aligned with policy
    root_value: float
    root: SearchNode
    trace: list = field(default_factory=list)


def run_search(planner, obs, context, cfg, rng, collect=False, temperature=None, debug=False):
    """Full search from one decision point; returns the improved policy.

    `collect` turns on root Dirichlet noise (exploration during data
    gathering); evaluation searches leave priors untouched. `temperature`
    overrides cfg.temperature for the returned policy.
    """
    cfg.validate()
    root_eval = planner.root(obs, context, rng)
    root = SearchNode(root_eval.payload, root_eval.actions, root_eval.priors, depth=0)
    if collect and cfg.noise_weight > 0.0:
        apply_root_noise(root, cfg, rng)
    minmax = MinMaxStats()
    trace = []
    for sim in range(cfg.num_simulations):
        node, path = root, []
        while True:
            if node.terminal or not node.expanded:
                leaf_value = 0.0
                break
            idx = select_child(node, cfg, minmax)
            edge = node.edges[idx]
            path.append((node, edge))
            if edge.child is None:
                ev = planner.expand(node.payload, edge.action, rng)
                edge.reward = ev.reward
                edge.child = SearchNode(ev.payload, ev.actions, ev.priors,
                                        depth=node.depth + 1, terminal=ev.terminal)
                leaf_value = 0.0 if ev.terminal else ev.value
                break
            node = edge.child
        backup(path, leaf_value, cfg, minmax)
        if debug:
            trace.append({
                "sim": sim,
                "path": [_edge_label(e) for _, e in path],
                "leaf_value": float(leaf_value),
                "root_n": [e.visit_count for e in root.edges],
                "root_q": [e.q for e in root.edges],
            })
    visits = [e.visit_count for e in root.edges]
    t = cfg.temperature if temperature is None else temperature
    policy = improved_policy(visits, t)
    total = sum(visits)
    root_value = sum(e.value_sum for e in root.edges) / total if total else 0.0
    return SearchResult(policy, [e.action for e in root.edges], root_value, root, trace)


def _edge_label(edge):
    a = edge.action
    if isinstance(a, (int, np.integer)):
        return int(a)
    return [float(x) for x in np.asarray(a).reshape(-1)]


def write_search_trace(path, trace):
    """Dump per-simulation search records as JSONL."""
    with open(path, "w") as f:
        for rec in trace:
            f.write(json.dumps(rec) + "\n")


def check_visit_conservation(root):
    """Every expanded node satisfies: visits = 1 + sum of its edge visits."""
    stack = [root]
    while stack:
        node = stack.pop()
        if node.visit_count != 1 + sum(e.visit_count for e in node.edges):
            return False
        stack.extend(e.child for e in node.edges if e.child is not None)
    return True
