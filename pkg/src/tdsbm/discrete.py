"""Time-dependent discrete (single-membership) degree-corrected SBM.

Given block labels the maximum-likelihood parameters are closed form:
``omega[g, h, t] = m[g, h, t]`` and ``theta[i] = k[i] / kappa[g_i]``. Plugging
them back in leaves the label-dependent profile objective

    sum_{t,g,h} m[g,h,t] * log(m[g,h,t] / (kappa[g] * kappa[h]))
        = sum m log m - sum_g kappa[g] log kappa[g]

which a Kernighan-Lin style local search maximizes over labelings.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .network import MultilayerNetwork, block_counts, check_labels, degree_summary
from .report import FitReport, restart_seed

logger = logging.getLogger(__name__)


def _xlogx(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


@dataclass
class DiscreteModel:
    labels: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    kind: str = "tdd"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        N = len(self.labels)
        if self.theta.shape != (N,):
            raise ValueError("theta must have one entry per node")
        K = self.omega.shape[0]
        if self.omega.ndim != 3 or self.omega.shape[1] != K:
            raise ValueError("omega must be (K, K, T)")
        check_labels(self.labels, N, K)
        if np.any(self.theta < 0) or np.any(self.omega < 0):
            raise ValueError("parameters must be nonnegative")

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_blocks(self) -> int:
        return self.omega.shape[0]

    @property
    def n_layers(self) -> int:
        return self.omega.shape[2]

    def to_mixed(self):
        """Embed as a mixed-membership model with ``C[i, g_i] = theta[i]``."""
        from .mixed import MixedModel

        C = np.zeros((self.n_nodes, self.n_blocks))
        C[np.arange(self.n_nodes), self.labels] = self.theta
        return MixedModel(C, self.omega.copy())


@dataclass
class KlConfig:
    runs: int = 50
    tolerance: float = 1e-4
    seed: int = 0
    node_order: str = "greedy"
    max_sweeps: int = 1000
    threads: int = 1

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.runs < 1 or self.max_sweeps < 1:
            raise ValueError("runs and max_sweeps must be >= 1")
        if self.node_order not in ("random", "greedy"):
            raise ValueError("node_order must be 'random' or 'greedy'")

    def to_dict(self) -> dict:
        return asdict(self)


def mle_given_labels(net: MultilayerNetwork, labels, n_blocks: Optional[int] = None):
    """Closed-form ``(theta, omega)`` for fixed labels."""
    labels, K = check_labels(labels, net.n_nodes, n_blocks)
    bc = block_counts(net, labels, K)
    k = degree_summary(net).k
    kappa_i = bc.kappa[labels]
    if np.any(kappa_i == 0):
        bad = sorted(set(labels[kappa_i == 0].tolist()))
        raise ValueError(f"blocks {bad} have no trips; strengths are undefined")
    theta = k / kappa_i
    return theta, bc.m.astype(np.float64)


def profile_objective(net: MultilayerNetwork, labels, n_blocks: Optional[int] = None) -> float:
    labels, K = check_labels(labels, net.n_nodes, n_blocks)
    bc = block_counts(net, labels, K)
    return float(_xlogx(bc.m).sum() - _xlogx(bc.kappa).sum())


def log_likelihood_discrete(net: MultilayerNetwork, model: DiscreteModel) -> float:
    """Poisson log-likelihood with means ``theta_i theta_j omega[g_i, g_j, t]``.

    The ``-sum log A!`` constant is omitted, so values are directly comparable
    with :func:`tdsbm.mixed.log_likelihood`. Returns ``-inf`` when a cell with
    trips has zero mean.
    """
    if model.n_nodes != net.n_nodes or model.n_layers != net.n_layers:
        raise ValueError("model and network dimensions differ")
    th, g = model.theta, model.labels
    mu = th[net.src] * th[net.dst] * model.omega[g[net.src], g[net.dst], net.layer]
    if np.any(mu <= 0):
        return -math.inf
    K = model.n_blocks
    s = np.bincount(g, weights=th, minlength=K)
    mass = float(np.einsum("g,ght,h->", s, model.omega, s))
    return float(net.count @ np.log(mu)) - mass


def discrete_model(net: MultilayerNetwork, labels, n_blocks: Optional[int] = None,
                   kind: str = "tdd") -> DiscreteModel:
    labels, K = check_labels(labels, net.n_nodes, n_blocks)
    theta, omega = mle_given_labels(net, labels, K)
    return DiscreteModel(labels, theta, omega, kind=kind)


class BlockState:
    """Mutable labeling with block counts maintained under single-node moves.

    Besides ``m`` and ``kappa`` the state keeps, for every node, its trips to
    (``out``) and from (``inn``) each block by layer, excluding self-loops.
    Moving node ``i`` from ``r`` to ``s`` only touches rows and columns ``r``
    and ``s`` of ``m``, two ``kappa`` entries, and the profiles of ``i``'s
    neighbours.
    """

    def __init__(self, net: MultilayerNetwork, labels, n_blocks: int):
        labels, K = check_labels(labels, net.n_nodes, n_blocks)
        self.K = K
        self.T = net.n_layers
        self.N = net.n_nodes
        self.labels = labels.copy()
        bc = block_counts(net, labels, K)
        self.m = bc.m.astype(np.float64)
        self.kappa = bc.kappa.astype(np.float64)
        self.k = degree_summary(net).k.astype(np.float64)

        self_mask = net.src == net.dst
        self.loops = np.zeros((self.N, self.T))
        np.add.at(self.loops, (net.src[self_mask], net.layer[self_mask]), net.count[self_mask])
        off = ~self_mask
        src, dst, lay = net.src[off], net.dst[off], net.layer[off]
        cnt = net.count[off].astype(np.float64)
        self._out_adj = self._csr(src, dst, lay, cnt)
        self._in_adj = self._csr(dst, src, lay, cnt)
        size = self.N * K * self.T
        self.out = np.bincount((src * K + labels[dst]) * self.T + lay, weights=cnt,
                               minlength=size).reshape(self.N, K, self.T)
        self.inn = np.bincount((dst * K + labels[src]) * self.T + lay, weights=cnt,
                               minlength=size).reshape(self.N, K, self.T)

    def _csr(self, owner, other, layer, count):
        order = np.argsort(owner, kind="stable")
        ptr = np.zeros(self.N + 1, dtype=np.int64)
        np.cumsum(np.bincount(owner, minlength=self.N), out=ptr[1:])
        return ptr, other[order], layer[order], count[order]

    def objective(self) -> float:
        return float(_xlogx(self.m).sum() - _xlogx(self.kappa).sum())

    def delta(self, i: int, s: int) -> float:
        """Exact change of the profile objective if node ``i`` moved to block ``s``."""
        r = int(self.labels[i])
        if s == r:
            return 0.0
        o, n, loop, m = self.out[i], self.inn[i], self.loops[i], self.m
        f = _xlogx
        others = np.array([g for g in range(self.K) if g != r and g != s], dtype=np.int64)
        d = 0.0
        if len(others):
            d += (f(m[r, others] - o[others]) - f(m[r, others])).sum()
            d += (f(m[s, others] + o[others]) - f(m[s, others])).sum()
            d += (f(m[others, r] - n[others]) - f(m[others, r])).sum()
            d += (f(m[others, s] + n[others]) - f(m[others, s])).sum()
        d += (f(m[r, r] - o[r] - n[r] - loop) - f(m[r, r])).sum()
        d += (f(m[r, s] - o[s] + n[r]) - f(m[r, s])).sum()
        d += (f(m[s, r] + o[r] - n[s]) - f(m[s, r])).sum()
        d += (f(m[s, s] + o[s] + n[s] + loop) - f(m[s, s])).sum()
        ki, kr, ks = self.k[i], self.kappa[r], self.kappa[s]
        d -= float(f(kr - ki) - f(kr) + f(ks + ki) - f(ks))
        return float(d)

    def all_deltas(self, nodes=None) -> np.ndarray:
        """``delta(i, s)`` for every listed node and every block, shape ``(len(nodes), K)``.

        Entries for a node's current block are 0.
        """
        nodes = np.arange(self.N) if nodes is None else np.asarray(nodes, dtype=np.int64)
        f = _xlogx
        m = self.m
        R = self.labels[nodes]
        o, n, loop, k = self.out[nodes], self.inn[nodes], self.loops[nodes], self.k[nodes]
        rows = np.arange(len(nodes))
        mr = m[R]                          # m[r_i, h]
        mc = m[:, R].transpose(1, 0, 2)    # m[g, r_i]
        o_r, n_r = o[rows, R], n[rows, R]

        rm = (f(mr - o) - f(mr)).sum(axis=2)                        # [i, h]
        cm = (f(mc - n) - f(mc)).sum(axis=2)                        # [i, g]
        rp = (f(m[None] + o[:, None]) - f(m)[None]).sum(axis=3)     # [i, s, h]
        mt = m.transpose(1, 0, 2)
        cp = (f(mt[None] + n[:, None]) - f(mt)[None]).sum(axis=3)   # [i, s, g]

        s_idx = np.arange(self.K)
        rp_diag = rp[:, s_idx, s_idx]
        cp_diag = cp[:, s_idx, s_idx]
        d = (rm.sum(axis=1, keepdims=True) - rm[rows, R][:, None] - rm)
        d += (cm.sum(axis=1, keepdims=True) - cm[rows, R][:, None] - cm)
        d += rp.sum(axis=2) - rp[rows[:, None], s_idx[None], R[:, None]] - rp_diag
        d += cp.sum(axis=2) - cp[rows[:, None], s_idx[None], R[:, None]] - cp_diag

        m_rr = m[R, R]
        d += (f(m_rr - o_r - n_r - loop) - f(m_rr)).sum(axis=1)[:, None]
        d += (f(mr - o + n_r[:, None]) - f(mr)).sum(axis=2)
        d += (f(mc + o_r[:, None] - n) - f(mc)).sum(axis=2)
        m_ss = m[s_idx, s_idx][None]
        d += (f(m_ss + o + n + loop[:, None]) - f(m_ss)).sum(axis=2)
        kr = self.kappa[R][:, None]
        ks = self.kappa[None, :]
        d -= f(kr - k[:, None]) - f(kr) + f(ks + k[:, None]) - f(ks)
        d[rows, R] = 0.0
        return d

    def move(self, i: int, s: int):
        r = int(self.labels[i])
        if s == r:
            return
        o, n, loop = self.out[i], self.inn[i], self.loops[i]
        m = self.m
        m[r] -= o
        m[s] += o
        m[:, r] -= n
        m[:, s] += n
        m[r, r] -= loop
        m[s, s] += loop
        self.kappa[r] -= self.k[i]
        self.kappa[s] += self.k[i]
        self.labels[i] = s
        # neighbours now see i in block s
        ptr, other, layer, count = self._in_adj
        lo, hi = ptr[i], ptr[i + 1]
        np.subtract.at(self.out, (other[lo:hi], r, layer[lo:hi]), count[lo:hi])
        np.add.at(self.out, (other[lo:hi], s, layer[lo:hi]), count[lo:hi])
        ptr, other, layer, count = self._out_adj
        lo, hi = ptr[i], ptr[i + 1]
        np.subtract.at(self.inn, (other[lo:hi], r, layer[lo:hi]), count[lo:hi])
        np.add.at(self.inn, (other[lo:hi], s, layer[lo:hi]), count[lo:hi])

    def best_move(self, i: int) -> tuple[int, float]:
        """Best target block other than the current one; ties go to the lowest index."""
        d = self.all_deltas([i])[0]
        d[self.labels[i]] = -math.inf
        s = int(np.argmax(d))
        return s, float(d[s])


def delta_objective(state: BlockState, i: int, target: int) -> float:
    return state.delta(i, target)


def _sweep(state: BlockState, rng, order: str):
    """Move every node exactly once, then rewind to the best state seen.

    Returns the objective gain of the kept state over the sweep's start.
    """
    N = state.N
    history = []
    gain, best_gain, best_len = 0.0, 0.0, 0
    frozen = np.zeros(N, dtype=bool)
    visit = rng.permutation(N) if order == "random" else None
    for step in range(N):
        if visit is not None:
            i = int(visit[step])
            s, d = state.best_move(i)
        else:
            free = np.flatnonzero(~frozen)
            deltas = state.all_deltas(free)
            deltas[np.arange(len(free)), state.labels[free]] = -math.inf
            flat = int(np.argmax(deltas))
            i, s = int(free[flat // state.K]), flat % state.K
            d = float(deltas.flat[flat])
        history.append((i, int(state.labels[i])))
        state.move(i, s)
        frozen[i] = True
        gain += d
        if gain > best_gain:
            best_gain, best_len = gain, len(history)
    for i, r in reversed(history[best_len:]):
        state.move(i, r)
    return best_gain


@dataclass
class _RunResult:
    index: int
    labels: np.ndarray
    objective: float
    sweeps: int
    trace: list


def _run(net: MultilayerNetwork, K: int, cfg: KlConfig, index: int) -> _RunResult:
    rng = np.random.default_rng(restart_seed(cfg.seed, index))
    labels = rng.integers(0, K, size=net.n_nodes)
    state = BlockState(net, labels, K)
    trace = [state.objective()]
    sweeps = 0
    if K > 1:
        while sweeps < cfg.max_sweeps:
            sweeps += 1
            gain = _sweep(state, rng, cfg.node_order)
            trace.append(state.objective())
            if gain <= cfg.tolerance:
                break
    obj = profile_objective(net, state.labels, K)
    trace[-1] = obj
    return _RunResult(index, state.labels.copy(), obj, sweeps, trace)


def _relabel_nonempty(labels: np.ndarray, K: int):
    used = np.unique(labels)
    if len(used) == K:
        return labels, K
    warnings.warn(f"fit left {K - len(used)} empty block(s); reporting K={len(used)}")
    remap = np.full(K, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return remap[labels], len(used)


def fit_discrete(net: MultilayerNetwork, K: int, config: Optional[KlConfig] = None,
                 kind: str = "tdd"):
    """Best of ``config.runs`` KL-type searches; returns ``(DiscreteModel, FitReport)``.

    Each run starts from uniformly random labels. A sweep moves every node
    once (to its best other block, even if that lowers the objective) and then
    rewinds to the best intermediate state. A run ends when a sweep gains no
    more than ``config.tolerance``.
    """
    cfg = config or KlConfig()
    if K < 1 or net.n_nodes < K:
        raise ValueError("need 1 <= K <= N")
    t0 = time.perf_counter()
    indices = range(cfg.runs)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda r: _run(net, K, cfg, r), indices))
    else:
        results = [_run(net, K, cfg, r) for r in indices]
    best = max(results, key=lambda r: (r.objective, -r.index))
    labels, K_eff = _relabel_nonempty(best.labels, K)
    model = discrete_model(net, labels, K_eff, kind=kind)
    report = FitReport(
        final_loglik=log_likelihood_discrete(net, model),
        final_objective=best.objective,
        iterations=best.sweeps,
        restarts_run=cfg.runs,
        best_restart_index=best.index,
        seed=cfg.seed,
        wall_time_seconds=time.perf_counter() - t0,
        stall_triggered=False,
        trace=best.trace,
        restart_scores=[r.objective for r in results],
    )
    return model, report


def fit_static(net: MultilayerNetwork, K: int, config: Optional[KlConfig] = None):
    """Discrete fit on the layer-aggregated network (``T = 1``)."""
    return fit_discrete(net.with_layers_merged(), K, config, kind="static")
