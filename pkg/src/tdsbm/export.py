"""GeoJSON and CSV exports for mapping station roles outside this package."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .analysis import RoleLabel
from .discrete import DiscreteModel
from .mixed import MixedModel, c_totals
from .network import MultilayerNetwork, degree_summary


class MissingCoordinatesError(ValueError):
    def __init__(self, stations: Sequence[str]):
        self.stations = list(stations)
        shown = ", ".join(self.stations[:20])
        more = f" (+{len(self.stations) - 20} more)" if len(self.stations) > 20 else ""
        super().__init__(f"stations without coordinates: {shown}{more}")


def stations_geojson(model, net: MultilayerNetwork,
                     roles: Optional[Sequence[RoleLabel]] = None) -> dict:
    """One Point feature per station carrying its block assignment and activity.

    Discrete models give ``block`` and ``theta``; mixed models give one
    ``C_<g>`` strength per block, ``c_total`` and the dominant block. ``role``
    is the role of the (dominant) block when ``roles`` is given.
    """
    if model.n_nodes != net.n_nodes:
        raise ValueError("model and network have different node counts")
    missing = [sid for sid, xy in zip(net.node_ids, net.coords) if xy is None]
    if missing:
        raise MissingCoordinatesError(missing)
    role_of = {r.block: r.role for r in roles} if roles else {}
    k = degree_summary(net).k
    features = []
    if isinstance(model, MixedModel):
        totals = c_totals(model)
        dominant = np.argmax(model.C, axis=1)
    for i, (sid, (lat, lon)) in enumerate(zip(net.node_ids, net.coords)):
        props = {"station_id": sid, "degree": int(k[i])}
        if isinstance(model, DiscreteModel):
            block = int(model.labels[i])
            props.update(block=block, theta=float(model.theta[i]))
        else:
            block = int(dominant[i])
            props.update({f"C_{g}": float(model.C[i, g]) for g in range(model.n_blocks)})
            props.update(c_total=float(totals[i]), dominant_block=block)
        if role_of:
            props["role"] = role_of.get(block, "other")
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def omega_rows(omega):
    omega = np.asarray(omega)
    K, _, T = omega.shape
    return [(g, h, t, float(omega[g, h, t])) for g in range(K) for h in range(K) for t in range(T)]
