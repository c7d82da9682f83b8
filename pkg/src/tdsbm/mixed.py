"""Time-dependent mixed-membership SBM.

Trips from ``i`` to ``j`` in layer ``t`` are Poisson with mean

    mu[i, j, t] = sum_{g,h} C[i, g] * omega[g, h, t] * C[j, h]

Parameters are fitted by alternating multiplicative (log-space) gradient
steps on ``omega`` and ``C``, each with an adaptive step size chosen from a
grown and a shrunk candidate.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .network import MultilayerNetwork
from .report import FitReport, restart_seed

logger = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny


class ZeroRateError(ValueError):
    """A cell with observed trips has zero expected rate (log-likelihood is -inf)."""


class FitFailed(RuntimeError):
    """Every restart of a fit was aborted."""


@dataclass
class MixedModel:
    C: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if self.C.ndim != 2 or self.omega.ndim != 3:
            raise ValueError("C must be (N, K) and omega (K, K, T)")
        K = self.C.shape[1]
        if self.omega.shape[:2] != (K, K):
            raise ValueError(f"omega must have shape ({K}, {K}, T), got {self.omega.shape}")
        if np.any(self.C < 0) or np.any(self.omega < 0):
            raise ValueError("parameters must be nonnegative")

    @property
    def n_nodes(self) -> int:
        return self.C.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.C.shape[1]

    @property
    def n_layers(self) -> int:
        return self.omega.shape[2]

    @property
    def normalized(self) -> bool:
        return bool(np.all(np.abs(self.C.sum(axis=0) - 1.0) <= 1e-9))

    def copy(self) -> "MixedModel":
        return MixedModel(self.C.copy(), self.omega.copy())


@dataclass
class GdConfig:
    initial_step: float = 1e-4
    grow_factor: float = 1.2
    shrink_factor: float = 0.8
    stall_window: int = 600
    sig_digits: int = 4
    max_iters: int = 20000
    restarts: int = 10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.shrink_factor < 1 < self.grow_factor:
            raise ValueError("need 0 < shrink_factor < 1 < grow_factor")
        if self.stall_window < 1 or self.max_iters < 1 or self.restarts < 1:
            raise ValueError("stall_window, max_iters and restarts must be >= 1")
        if self.initial_step <= 0 or self.sig_digits < 1:
            raise ValueError("initial_step must be positive and sig_digits >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_dims(net: MultilayerNetwork, model: MixedModel):
    if model.n_nodes != net.n_nodes or model.n_layers != net.n_layers:
        raise ValueError(
            f"model dims (N={model.n_nodes}, T={model.n_layers}) do not match "
            f"network (N={net.n_nodes}, T={net.n_layers})"
        )


def rates(model: MixedModel) -> np.ndarray:
    """Dense ``N x N x T`` rate tensor. Only for small networks."""
    return np.einsum("ig,ght,jh->ijt", model.C, model.omega, model.C)


def c_totals(model: MixedModel) -> np.ndarray:
    """Per-node activity score ``sum_g C[i, g]`` (for sizing nodes in maps)."""
    return model.C.sum(axis=1)


def normalize(model: MixedModel) -> MixedModel:
    """Equivalent model with every column of ``C`` summing to one."""
    s = model.C.sum(axis=0)
    if np.any(s <= 0):
        raise ValueError(f"blocks {np.flatnonzero(s <= 0).tolist()} have zero total strength")
    C = model.C / s
    omega = model.omega * s[:, None, None] * s[None, :, None]
    return MixedModel(C, omega)


class _Workspace:
    """Per-network precomputation shared by likelihood and gradient evaluations."""

    def __init__(self, net: MultilayerNetwork):
        self.net = net
        self.src = net.src
        self.dst = net.dst
        self.layer = net.layer
        self.A = net.count.astype(np.float64)
        nnz = net.nnz
        cols = np.arange(nnz)
        ones = np.ones(nnz)
        self.by_src = sp.csr_matrix((ones, (net.src, cols)), shape=(net.n_nodes, nnz))
        self.by_dst = sp.csr_matrix((ones, (net.dst, cols)), shape=(net.n_nodes, nnz))
        self.by_layer = sp.csr_matrix((ones, (net.layer, cols)), shape=(net.n_layers, nnz))

    def edge_rates(self, C, omega):
        """Rates on observed cells plus the out-weights ``X[e, g] = sum_h omega[g,h,t] C[j,h]``."""
        Ci = C[self.src]
        Cj = C[self.dst]
        W = omega[:, :, self.layer]  # (K, K, nnz)
        X = np.einsum("ghe,eh->eg", W, Cj)
        mu = np.einsum("eg,eg->e", Ci, X)
        return mu, Ci, Cj, W, X

    @staticmethod
    def mass(C, omega) -> float:
        s = C.sum(axis=0)
        return float(np.einsum("g,ght,h->", s, omega, s))

    def loglik(self, C, omega):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            terms = self.edge_rates(C, omega)
            mu = terms[0]
            if np.any(~(mu > 0)):
                return -math.inf, terms
            ll = float(self.A @ np.log(mu)) - self.mass(C, omega)
        if not math.isfinite(ll):
            return -math.inf, terms
        return ll, terms

    def grad_omega(self, C, omega, terms):
        mu, Ci, Cj, _, _ = terms
        R = self.A / mu
        pair = np.einsum("e,eg,eh->egh", R, Ci, Cj).reshape(len(R), -1)
        K = C.shape[1]
        T = omega.shape[2]
        g = (self.by_layer @ pair).reshape(T, K, K).transpose(1, 2, 0)
        s = C.sum(axis=0)
        return g - np.outer(s, s)[:, :, None]

    def grad_C(self, C, omega, terms):
        mu, Ci, _, W, X = terms
        R = (self.A / mu)[:, None]
        Y = np.einsum("eg,ghe->eh", Ci, W)  # in-weights: sum_g C[i,g] omega[g,h,t]
        g = self.by_src @ (R * X) + self.by_dst @ (R * Y)
        s = C.sum(axis=0)
        w = omega.sum(axis=2)
        return g - (w @ s + s @ w)[None, :]


def log_likelihood(net: MultilayerNetwork, model: MixedModel) -> float:
    """Poisson log-likelihood without the ``-sum log A!`` constant.

    Returns ``-inf`` when a cell with observed trips has zero rate.
    """
    _check_dims(net, model)
    ll, _ = _Workspace(net).loglik(model.C, model.omega)
    return ll


def gradient(net: MultilayerNetwork, model: MixedModel) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(d ll / d C, d ll / d omega)``."""
    _check_dims(net, model)
    ws = _Workspace(net)
    ll, terms = ws.loglik(model.C, model.omega)
    if ll == -math.inf:
        raise ZeroRateError("gradient undefined: zero rate on a cell with observed trips")
    return ws.grad_C(model.C, model.omega, terms), ws.grad_omega(model.C, model.omega, terms)


def init_params(net: MultilayerNetwork, K: int, seed=None) -> MixedModel:
    """Log-normal starting point scaled so the expected trip total matches the data.

    Each block pair's ``omega`` profile is rescaled to sum to ``total / K**2``
    and each column of ``C`` to sum to one.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    omega = np.exp(rng.standard_normal((K, K, net.n_layers)))
    C = np.exp(rng.standard_normal((net.n_nodes, K)))
    omega *= (net.total / K**2) / omega.sum(axis=2, keepdims=True)
    C /= C.sum(axis=0)
    return MixedModel(C, omega)


def _sig_key(x: float, digits: int) -> str:
    return f"{x:.{digits - 1}e}"


@dataclass
class _RunResult:
    index: int
    C: Optional[np.ndarray]
    omega: Optional[np.ndarray]
    loglik: float
    iterations: int
    stalled: bool
    trace: list


def _step(params, grad, step, factors, evaluate):
    """Try ``params * exp(step * f * grad * params)`` for each factor ``f``.

    Returns ``(best_step, best_params, best_ll, best_terms)``; ties go to the
    first factor.
    """
    best = None
    with np.errstate(over="ignore", invalid="ignore"):
        for f in factors:
            s = step * f
            cand = params * np.exp(s * grad * params)
            if not np.all(np.isfinite(cand)):
                ll, terms = -math.inf, None
            else:
                np.maximum(cand, _TINY, out=cand)
                ll, terms = evaluate(cand)
            if best is None or ll > best[2]:
                best = (s, cand, ll, terms)
    return best


def _run(ws: _Workspace, K: int, cfg: GdConfig, index: int) -> _RunResult:
    rng = np.random.default_rng(restart_seed(cfg.seed, index))
    model = init_params(ws.net, K, rng)
    C, omega = model.C, model.omega
    ll, terms = ws.loglik(C, omega)
    if not math.isfinite(ll):
        logger.warning("restart %d aborted: non-finite initial log-likelihood", index)
        return _RunResult(index, None, None, -math.inf, 0, False, [])
    factors = (cfg.grow_factor, cfg.shrink_factor)
    eta = h = cfg.initial_step
    trace = [ll]
    key, same = _sig_key(ll, cfg.sig_digits), 0
    stalled = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        g_w = ws.grad_omega(C, omega, terms)
        eta, cand, cll, cterms = _step(omega, g_w, eta, factors, lambda w: ws.loglik(C, w))
        # only improving candidates are taken, so the trace never decreases
        if cll >= ll:
            omega, ll, terms = cand, cll, cterms

        g_c = ws.grad_C(C, omega, terms)
        h, cand, cll, cterms = _step(C, g_c, h, factors, lambda c: ws.loglik(c, omega))
        if cll >= ll:
            C, ll, terms = cand, cll, cterms

        trace.append(ll)
        k = _sig_key(ll, cfg.sig_digits)
        if k == key:
            same += 1
            if same >= cfg.stall_window:
                stalled = True
                break
        else:
            key, same = k, 0
    return _RunResult(index, C, omega, ll, it, stalled, trace)


def fit(net: MultilayerNetwork, K: int, config: Optional[GdConfig] = None):
    """Best-of-``config.restarts`` gradient fit; returns ``(normalized model, FitReport)``."""
    cfg = config or GdConfig()
    if K < 1:
        raise ValueError("K must be >= 1")
    if net.total == 0:
        raise ValueError("cannot fit a network without trips")
    ws = _Workspace(net)
    t0 = time.perf_counter()
    indices = range(cfg.restarts)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda r: _run(ws, K, cfg, r), indices))
    else:
        results = [_run(ws, K, cfg, r) for r in indices]
    ok = [r for r in results if r.C is not None]
    if not ok:
        raise FitFailed("all restarts aborted")
    best = max(ok, key=lambda r: (r.loglik, -r.index))
    model = normalize(MixedModel(best.C, best.omega))
    report = FitReport(
        final_loglik=best.loglik,
        iterations=best.iterations,
        restarts_run=cfg.restarts,
        best_restart_index=best.index,
        seed=cfg.seed,
        wall_time_seconds=time.perf_counter() - t0,
        stall_triggered=best.stalled,
        trace=best.trace,
        restart_scores=[r.loglik if r.C is not None else None for r in results],
        aborted_restarts=[r.index for r in results if r.C is None],
    )
    return model, report
