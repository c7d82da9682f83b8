"""Multilayer trip-count networks and their degree / block bookkeeping.

A network holds the nonnegative integer tensor ``A[i, j, t]`` (trips from
station ``i`` to station ``j`` starting in layer ``t``) as a sparse list of
entries ordered by ``(t, i, j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp


Coords = Optional[tuple[float, float]]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MultilayerNetwork:
    """Sparse ``N x N x T`` trip-count tensor with a node registry.

    Use :meth:`from_entries` to build one; it sums duplicate entries, drops
    zeros and sorts by ``(t, i, j)``.
    """

    n_nodes: int
    n_layers: int
    src: np.ndarray
    dst: np.ndarray
    layer: np.ndarray
    count: np.ndarray
    node_ids: tuple[str, ...]
    coords: tuple[Coords, ...] = field(default=())

    @classmethod
    def from_entries(
        cls,
        src,
        dst,
        layer,
        count,
        n_nodes: int,
        n_layers: int,
        node_ids: Optional[Sequence[str]] = None,
        coords: Optional[Sequence[Coords]] = None,
    ) -> "MultilayerNetwork":
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        layer = np.asarray(layer, dtype=np.int64).ravel()
        count = np.asarray(count, dtype=np.int64).ravel()
        if not (len(src) == len(dst) == len(layer) == len(count)):
            raise ValueError("entry arrays must have equal length")
        if n_nodes < 1 or n_layers < 1:
            raise ValueError("n_nodes and n_layers must be positive")
        if len(src):
            if src.min() < 0 or src.max() >= n_nodes or dst.min() < 0 or dst.max() >= n_nodes:
                raise ValueError("node index out of range")
            if layer.min() < 0 or layer.max() >= n_layers:
                raise ValueError("layer index out of range")
            if count.min() < 0:
                raise ValueError("counts must be nonnegative")

        key = (layer * n_nodes + src) * n_nodes + dst
        uniq, inv = np.unique(key, return_inverse=True)
        summed = np.bincount(inv, weights=count, minlength=len(uniq)).astype(np.int64)
        keep = summed > 0
        uniq, summed = uniq[keep], summed[keep]
        t, rest = np.divmod(uniq, n_nodes * n_nodes)
        i, j = np.divmod(rest, n_nodes)

        if node_ids is None:
            node_ids = [str(k) for k in range(n_nodes)]
        if len(node_ids) != n_nodes:
            raise ValueError("node_ids length must equal n_nodes")
        if coords is None:
            coords = [None] * n_nodes
        if len(coords) != n_nodes:
            raise ValueError("coords length must equal n_nodes")
        return cls(
            n_nodes=int(n_nodes),
            n_layers=int(n_layers),
            src=_readonly(i),
            dst=_readonly(j),
            layer=_readonly(t),
            count=_readonly(summed),
            node_ids=tuple(str(s) for s in node_ids),
            coords=tuple(None if c is None else (float(c[0]), float(c[1])) for c in coords),
        )

    @classmethod
    def from_dense(cls, A, node_ids=None, coords=None) -> "MultilayerNetwork":
        A = np.asarray(A)
        if A.ndim != 3 or A.shape[0] != A.shape[1]:
            raise ValueError("dense tensor must have shape (N, N, T)")
        i, j, t = np.nonzero(A)
        return cls.from_entries(i, j, t, A[i, j, t], A.shape[0], A.shape[2], node_ids, coords)

    @property
    def nnz(self) -> int:
        return len(self.count)

    @property
    def total(self) -> int:
        """Total number of trips, ``m~ = sum A``."""
        return int(self.count.sum())

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_nodes, self.n_nodes, self.n_layers)

    def to_dense(self) -> np.ndarray:
        A = np.zeros(self.shape, dtype=np.int64)
        A[self.src, self.dst, self.layer] = self.count
        return A

    def layer_slice(self, t: int) -> slice:
        lo, hi = np.searchsorted(self.layer, [t, t + 1])
        return slice(int(lo), int(hi))

    def with_layers_merged(self) -> "MultilayerNetwork":
        """Collapse all layers into a single one (``T = 1``)."""
        return MultilayerNetwork.from_entries(
            self.src, self.dst, np.zeros_like(self.layer), self.count,
            self.n_nodes, 1, self.node_ids, self.coords,
        )


@dataclass(frozen=True)
class DegreeSummary:
    k: np.ndarray
    k_in_by_hour: np.ndarray
    k_out_by_hour: np.ndarray
    total_edges: int


@dataclass(frozen=True)
class BlockCounts:
    m: np.ndarray
    m_agg: np.ndarray
    kappa: np.ndarray
    kappa_in_by_hour: np.ndarray
    kappa_out_by_hour: np.ndarray


def aggregate(net: MultilayerNetwork) -> sp.csr_matrix:
    """Layer-summed ``N x N`` matrix ``A~``."""
    return sp.csr_matrix(
        (net.count, (net.src, net.dst)), shape=(net.n_nodes, net.n_nodes), dtype=np.int64
    )


def degree_hour_matrix(net: MultilayerNetwork, direction: str) -> np.ndarray:
    """Arrivals (``direction="in"``) or departures (``"out"``) per node and layer.

    A self-loop counts once in each direction.
    """
    if direction == "in":
        nodes = net.dst
    elif direction == "out":
        nodes = net.src
    else:
        raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")
    flat = np.bincount(
        nodes * net.n_layers + net.layer, weights=net.count, minlength=net.n_nodes * net.n_layers
    )
    return flat.reshape(net.n_nodes, net.n_layers)


def degree_summary(net: MultilayerNetwork) -> DegreeSummary:
    k_in = degree_hour_matrix(net, "in").astype(np.int64)
    k_out = degree_hour_matrix(net, "out").astype(np.int64)
    k = k_in.sum(axis=1) + k_out.sum(axis=1)
    return DegreeSummary(k=k, k_in_by_hour=k_in, k_out_by_hour=k_out, total_edges=net.total)


def check_labels(labels, n_nodes: int, n_blocks: Optional[int] = None) -> tuple[np.ndarray, int]:
    labels = np.asarray(labels)
    if labels.shape != (n_nodes,):
        raise ValueError(f"labels must have length {n_nodes}, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    if n_blocks is None:
        n_blocks = int(labels.max()) + 1 if n_nodes else 0
    if n_nodes and (labels.min() < 0 or labels.max() >= n_blocks):
        raise ValueError(f"labels must lie in 0..{n_blocks - 1}")
    return labels, n_blocks


def block_counts(net: MultilayerNetwork, labels, n_blocks: Optional[int] = None) -> BlockCounts:
    """Block-to-block trip totals ``m[g, h, t]`` and block degrees ``kappa``.

    Intra-block trips are counted twice in ``kappa`` (once out, once in).
    """
    labels, K = check_labels(labels, net.n_nodes, n_blocks)
    T = net.n_layers
    g = labels[net.src]
    h = labels[net.dst]
    m = np.bincount((g * K + h) * T + net.layer, weights=net.count, minlength=K * K * T)
    m = m.astype(np.int64).reshape(K, K, T)
    m_agg = m.sum(axis=2)
    kappa_out = m.sum(axis=1)
    kappa_in = m.sum(axis=0)
    kappa = m_agg.sum(axis=1) + m_agg.sum(axis=0)
    return BlockCounts(m=m, m_agg=m_agg, kappa=kappa, kappa_in_by_hour=kappa_in,
                       kappa_out_by_hour=kappa_out)


def hourly_totals(net: MultilayerNetwork) -> np.ndarray:
    return np.bincount(net.layer, weights=net.count, minlength=net.n_layers).astype(np.int64)
