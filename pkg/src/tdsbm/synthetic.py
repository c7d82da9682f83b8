"""Planted home/work models for benchmarks and demos."""
from __future__ import annotations

import numpy as np

from .discrete import DiscreteModel
from .mixed import MixedModel, normalize

HOME, WORK = 0, 1


def bump(T: int, center: float, width: float) -> np.ndarray:
    """Gaussian bump over layer indices, peak value 1."""
    t = np.arange(T)
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def commute_omega(total: float, T: int = 24, peak_ratio: float = 8.0, intra_share: float = 0.5,
                  morning: float = 8.0, evening: float = 17.5, width: float = 1.2) -> np.ndarray:
    """Two-block ``omega`` with home->work morning and work->home evening rushes.

    Each commute profile is a flat base plus a bump whose height is
    ``peak_ratio - 1`` times the base, so the rush-hour rate is ``peak_ratio``
    times the off-peak rate. Intra-block traffic follows a midday hump and
    takes ``intra_share`` of ``total``.
    """
    base = np.ones(T)
    to_work = base + (peak_ratio - 1) * bump(T, morning, width)
    to_home = base + (peak_ratio - 1) * bump(T, evening, width)
    intra = 1 + bump(T, 13.0, 4.0)
    omega = np.zeros((2, 2, T))
    inter = total * (1 - intra_share) / 2
    omega[HOME, WORK] = inter * to_work / to_work.sum()
    omega[WORK, HOME] = inter * to_home / to_home.sum()
    omega[HOME, HOME] = omega[WORK, WORK] = total * intra_share / 2 * intra / intra.sum()
    return omega


def _strengths(rng, labels, K, spread):
    w = np.exp(spread * rng.standard_normal(len(labels)))
    s = np.bincount(labels, weights=w, minlength=K)
    return w / s[labels]


def planted_commute_discrete(n_home: int = 30, n_work: int = 30, total: float = 24000.0, T: int = 24,
                             peak_ratio: float = 8.0, spread: float = 0.5, seed=None) -> DiscreteModel:
    """Discrete home/work model with log-normal heterogeneous strengths."""
    rng = np.random.default_rng(seed)
    labels = np.array([HOME] * n_home + [WORK] * n_work)
    theta = _strengths(rng, labels, 2, spread)
    return DiscreteModel(labels, theta, commute_omega(total, T, peak_ratio))


def temporal_only_discrete(n_per_block: int = 30, total: float = 24000.0, T: int = 24,
                           spread: float = 0.5, seed=None) -> DiscreteModel:
    """Two blocks whose four block-pair totals are equal but whose timing is opposite.

    Block 0 sends to block 1 in the morning and receives in the evening and is
    busy internally in the evening; block 1 is the mirror image. Summed over
    the day the model is a plain degree-corrected random graph.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n_per_block)
    theta = _strengths(rng, labels, 2, spread)
    am = 0.2 + bump(T, 8.0, 1.5)
    pm = 0.2 + bump(T, 17.5, 1.5)
    am *= 1 / am.sum()
    pm *= 1 / pm.sum()
    pair = total / 4
    omega = np.empty((2, 2, T))
    omega[0, 1] = pair * am
    omega[1, 0] = pair * pm
    omega[0, 0] = pair * pm
    omega[1, 1] = pair * am
    return DiscreteModel(labels, theta, omega)


def planted_commute_mixed(N: int = 60, total: float = 20000.0, T: int = 24, peak_ratio: float = 8.0,
                          purity: float = 0.8, spread: float = 0.5, seed=None) -> MixedModel:
    """Mixed-membership home/work model.

    Half the nodes lean home and half lean work: a node's strength in its
    main block is ``purity`` of its activity and the rest goes to the other
    block. Columns of ``C`` are normalized.
    """
    rng = np.random.default_rng(seed)
    main = np.repeat([HOME, WORK], [N // 2, N - N // 2])
    activity = np.exp(spread * rng.standard_normal(N))
    share = np.clip(purity + 0.1 * rng.standard_normal(N), 0.5, 0.98)
    C = np.empty((N, 2))
    C[np.arange(N), main] = activity * share
    C[np.arange(N), 1 - main] = activity * (1 - share)
    C /= C.sum(axis=0)
    return normalize(MixedModel(C, commute_omega(total, T, peak_ratio)))
