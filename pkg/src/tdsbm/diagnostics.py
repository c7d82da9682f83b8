"""Exploratory summaries of a trip network: hourly profiles, SVD, in/out correlation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MultilayerNetwork, degree_hour_matrix, hourly_totals

__all__ = ["SvdComponent", "TopTwoSvd", "top2_svd", "in_out_degree_correlation", "hourly_totals"]


@dataclass(frozen=True)
class SvdComponent:
    value: float
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class TopTwoSvd:
    components: tuple[SvdComponent, SvdComponent]
    explained_fraction: float

    @property
    def singular_values(self) -> np.ndarray:
        return np.array([c.value for c in self.components])


def top2_svd(m) -> TopTwoSvd:
    """Two leading singular triplets of ``m`` and the share of ``||m||_F^2`` they explain.

    Signs are fixed so that the largest-magnitude entry of each right vector
    is positive. If ``m`` has rank below two the missing triplet has value
    zero and zero vectors.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    fro2 = float(np.sum(m * m))
    if fro2 == 0.0:
        raise ValueError("SVD of a zero matrix is undefined")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    comps = []
    for r in range(2):
        if r >= len(s) or s[r] <= s[0] * 1e-14:
            comps.append(SvdComponent(0.0, np.zeros(m.shape[0]), np.zeros(m.shape[1])))
            continue
        left, right = u[:, r].copy(), vt[r].copy()
        if right[np.argmax(np.abs(right))] < 0:
            left, right = -left, -right
        comps.append(SvdComponent(float(s[r]), left, right))
    frac = (comps[0].value ** 2 + comps[1].value ** 2) / fro2
    return TopTwoSvd(components=(comps[0], comps[1]), explained_fraction=min(frac, 1.0))


def in_out_degree_correlation(net: MultilayerNetwork) -> float:
    """Pearson correlation across stations of total arrivals vs total departures."""
    if net.n_nodes < 2:
        raise ValueError("need at least two nodes")
    k_in = degree_hour_matrix(net, "in").sum(axis=1)
    k_out = degree_hour_matrix(net, "out").sum(axis=1)
    if np.ptp(k_in) == 0 or np.ptp(k_out) == 0:
        raise ValueError("in- or out-degree has zero variance")
    r = float(np.corrcoef(k_in, k_out)[0, 1])
    return max(-1.0, min(1.0, r))
