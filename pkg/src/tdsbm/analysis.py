"""Model selection, synthetic sampling, recovery scoring and block role labels."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import comb

from .discrete import DiscreteModel, mle_given_labels
from .mixed import MixedModel
from .network import MultilayerNetwork, check_labels, degree_summary
from .report import FitReport

__all__ = [
    "FitReport", "RoleLabel", "SelectionRow", "param_count", "aic", "sample_network",
    "adjusted_rand_index", "degree_identity_residual", "label_blocks", "compare_models",
    "format_selection_table", "selection_table_csv",
]

MORNING = (6, 7, 8, 9)
EVENING = (16, 17, 18, 19)
ROLES = ("home", "work", "mixed", "park", "other")


def param_count(kind: str, N: int, K: int, T: int) -> int:
    """Free parameters: ``K*N - K + T*K^2`` (mixed) or ``2*N - K + T*K^2`` (discrete)."""
    if K < 1 or T < 1 or N < 1:
        raise ValueError("N, K and T must be positive")
    if K > N:
        raise ValueError(f"K={K} exceeds N={N}")
    if kind == "tdmm":
        return K * N - K + T * K * K
    if kind in ("tdd", "static"):
        return 2 * N - K + T * K * K
    raise ValueError(f"unknown model kind {kind!r}")


def aic(n_params: int, loglik: float) -> float:
    return 2.0 * n_params - 2.0 * loglik


def sample_network(model: Union[MixedModel, DiscreteModel], seed=None,
                   node_ids: Optional[Sequence[str]] = None) -> MultilayerNetwork:
    """Draw ``A[i, j, t] ~ Poisson(mu[i, j, t])`` independently for every cell.

    Layer ``t`` uses its own stream derived from ``(seed, t)``. Nodes without
    any trips stay in the registry.
    """
    if isinstance(model, DiscreteModel):
        model = model.to_mixed()
    N, T = model.n_nodes, model.n_layers
    root = np.random.SeedSequence(seed)
    srcs, dsts, layers, counts = [], [], [], []
    for t, ss in enumerate(root.spawn(T)):
        mu_t = model.C @ model.omega[:, :, t] @ model.C.T
        draw = np.random.default_rng(ss).poisson(mu_t)
        i, j = np.nonzero(draw)
        srcs.append(i)
        dsts.append(j)
        layers.append(np.full(len(i), t))
        counts.append(draw[i, j])
    return MultilayerNetwork.from_entries(
        np.concatenate(srcs), np.concatenate(dsts), np.concatenate(layers),
        np.concatenate(counts), N, T, node_ids,
    )


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index between two partitions."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("labelings must be 1-d and of equal length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least two items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all-in-one or all singletons)
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def degree_identity_residual(net: MultilayerNetwork, labels, n_blocks: Optional[int] = None) -> float:
    """Largest relative gap between expected and observed total degree at the discrete MLE.

    Expected degree of ``i`` is ``sum_{t,j} (mu[i,j,t] + mu[j,i,t])`` with
    ``mu`` built from the closed-form ``theta`` and ``omega`` for ``labels``.
    """
    labels, K = check_labels(labels, net.n_nodes, n_blocks)
    theta, omega = mle_given_labels(net, labels, K)
    w = omega.sum(axis=2)
    block_theta = np.bincount(labels, weights=theta, minlength=K)
    expected = theta * ((w @ block_theta)[labels] + (block_theta @ w)[labels])
    k = degree_summary(net).k
    return float(np.max(np.abs(expected - k) / np.maximum(k, 1)))


@dataclass
class RoleLabel:
    block: int
    role: str
    morning_peak_hour: int
    evening_peak_hour: int
    morning_ratio: float
    evening_ratio: float
    degenerate: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _window(hours: Iterable[int], T: int) -> np.ndarray:
    h = np.array(sorted({int(x) for x in hours if 0 <= int(x) < T}), dtype=np.int64)
    return h


def label_blocks(
    omega,
    morning_window: Iterable[int] = MORNING,
    evening_window: Iterable[int] = EVENING,
    dominance: float = 2.0,
    park_hours: tuple[float, float] = (12, 16),
    park_mass_ratio: float = 2.0,
    balance: float = 0.5,
) -> list[RoleLabel]:
    """Heuristic home/work/park/mixed/other roles from block-to-block profiles.

    The ordered pair ``(g, h)`` maximizing ``M[g,h] * E[h,g]`` (``g -> h``
    morning mass times ``h -> g`` evening mass) makes ``g`` home and ``h``
    work, provided that score beats the reversed pair by ``dominance``.
    Otherwise no home/work pair is assigned and labels are flagged
    ``degenerate``. A remaining block is ``park`` if its intra-block profile
    peaks inside ``park_hours`` and its intra-block mass is at least
    ``park_mass_ratio`` times any inter-block mass it takes part in; ``mixed``
    if its morning and evening outflows are within a factor ``1 / balance`` of
    each other; ``other`` otherwise.
    """
    omega = np.asarray(omega, dtype=np.float64)
    K, _, T = omega.shape
    morning = _window(morning_window, T)
    evening = _window(evening_window, T)
    M = omega[:, :, morning].sum(axis=2)
    E = omega[:, :, evening].sum(axis=2)
    out_by_t = omega.sum(axis=1)
    in_by_t = omega.sum(axis=0)

    def evidence(g):
        mh = int(morning[np.argmax(out_by_t[g, morning])]) if len(morning) else 0
        eh = int(evening[np.argmax(out_by_t[g, evening])]) if len(evening) else 0
        mo, mi = out_by_t[g, morning].sum(), in_by_t[g, morning].sum()
        eo, ei = out_by_t[g, evening].sum(), in_by_t[g, evening].sum()
        mr = float(mo / mi) if mi > 0 else float("inf") if mo > 0 else 1.0
        er = float(eo / ei) if ei > 0 else float("inf") if eo > 0 else 1.0
        return mh, eh, mr, er

    roles: dict[int, str] = {}
    degenerate = False
    if K == 1:
        roles[0] = "other"
    else:
        score = M * E.T
        np.fill_diagonal(score, -np.inf)
        g, h = np.unravel_index(int(np.argmax(score)), score.shape)
        best, reverse = score[g, h], score[h, g]
        if best > 0 and best >= dominance * reverse:
            roles[int(g)], roles[int(h)] = "home", "work"
        else:
            degenerate = True

    total = omega.sum(axis=2)
    lo, hi = park_hours
    for b in range(K):
        if b in roles:
            continue
        intra = omega[b, b]
        inter = max([total[b, x] for x in range(K) if x != b] + [total[x, b] for x in range(K) if x != b] + [0.0])
        peak = int(np.argmax(intra)) if intra.any() else -1
        out_m, out_e = M[b].sum(), E[b].sum()
        if intra.any() and lo <= peak < hi and total[b, b] >= park_mass_ratio * inter:
            roles[b] = "park"
        elif out_m > 0 and out_e > 0 and min(out_m, out_e) / max(out_m, out_e) >= balance:
            roles[b] = "mixed"
        else:
            roles[b] = "other"

    labels = []
    for b in range(K):
        mh, eh, mr, er = evidence(b)
        labels.append(RoleLabel(b, roles[b], mh, eh, mr, er, degenerate=degenerate))
    return labels


@dataclass(frozen=True)
class SelectionRow:
    kind: str
    K: int
    n_params: int
    loglik: float
    aic: float


def compare_models(reports: Sequence[tuple]) -> list[SelectionRow]:
    """Rows ``(kind, K, N_p, loglik, AIC)`` sorted by AIC, best first."""
    if not reports:
        raise ValueError("need at least one model")
    rows = [SelectionRow(str(kind), int(K), int(n_p), float(ll), aic(n_p, ll))
            for kind, K, n_p, ll in reports]
    return sorted(rows, key=lambda r: r.aic)


def format_selection_table(rows: Sequence[SelectionRow]) -> str:
    head = f"{'model':<8}{'K':>4}{'N_p':>8}{'log-likelihood':>18}{'AIC':>16}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.kind:<8}{r.K:>4}{r.n_params:>8}{r.loglik:>18.2f}{r.aic:>16.2f}")
    return "\n".join(lines)


def selection_table_csv(rows: Sequence[SelectionRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "K", "n_params", "loglik", "aic"])
    for r in rows:
        w.writerow([r.kind, r.K, r.n_params, repr(r.loglik), repr(r.aic)])
    return buf.getvalue()
