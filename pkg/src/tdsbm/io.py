"""On-disk formats.

Network directory::

    network.json   {"schema_version", "format": "tdsbm-network", "n_nodes", "n_layers", "total"}
    edges.csv      origin_index,destination_index,layer,count   (sorted by layer, origin, destination)
    nodes.csv      index,station_id,lat,lon                     (lat/lon empty when unknown)

Model file (JSON)::

    {"schema_version", "kind": "tdmm"|"tdd"|"static", "N", "K", "T", "node_ids",
     "C" (tdmm, N rows of K), "labels"/"theta" (tdd, static),
     "omega" (nested [g][h][t]), "loglik", "objective", "seed", "config"}
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .discrete import DiscreteModel
from .mixed import MixedModel
from .network import MultilayerNetwork

SCHEMA_VERSION = 1
PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path: PathLike, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default, allow_nan=True)
        fh.write("\n")


def read_json(path: PathLike):
    with open(path) as fh:
        return json.load(fh)


def save_network(net: MultilayerNetwork, directory: PathLike) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_json(d / "network.json", {
        "schema_version": SCHEMA_VERSION,
        "format": "tdsbm-network",
        "n_nodes": net.n_nodes,
        "n_layers": net.n_layers,
        "total": net.total,
    })
    with open(d / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin_index", "destination_index", "layer", "count"])
        w.writerows(zip(net.src.tolist(), net.dst.tolist(), net.layer.tolist(), net.count.tolist()))
    with open(d / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "station_id", "lat", "lon"])
        for k, (sid, xy) in enumerate(zip(net.node_ids, net.coords)):
            w.writerow([k, sid, *(("", "") if xy is None else (repr(xy[0]), repr(xy[1])))])
    return d


def load_network(directory: PathLike) -> MultilayerNetwork:
    d = Path(directory)
    try:
        meta = read_json(d / "network.json")
    except FileNotFoundError as exc:
        raise FormatError(f"{d} is not a network directory (missing network.json)") from exc
    if meta.get("format") != "tdsbm-network":
        raise FormatError(f"{d / 'network.json'} is not a network descriptor")
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported network schema version {meta.get('schema_version')}")
    N, T = int(meta["n_nodes"]), int(meta["n_layers"])
    ids: list[str] = [""] * N
    coords: list = [None] * N
    with open(d / "nodes.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["index"])
            ids[k] = row["station_id"]
            if row.get("lat") and row.get("lon"):
                coords[k] = (float(row["lat"]), float(row["lon"]))
    with warnings.catch_warnings():
        # an empty edge list is valid
        warnings.simplefilter("ignore", UserWarning)
        arr = np.loadtxt(d / "edges.csv", delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if arr.size == 0:
        arr = np.zeros((0, 4), dtype=np.int64)
    if arr.shape[1] != 4:
        raise FormatError("edges.csv must have four columns")
    return MultilayerNetwork.from_entries(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], N, T, ids, coords)


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def model_to_dict(model, node_ids: Optional[Sequence[str]] = None, loglik=None,
                  objective=None, seed=None, config=None) -> dict:
    if isinstance(model, MixedModel):
        d = {"kind": "tdmm", "N": model.n_nodes, "K": model.n_blocks, "T": model.n_layers,
             "C": model.C.tolist()}
    elif isinstance(model, DiscreteModel):
        d = {"kind": model.kind, "N": model.n_nodes, "K": model.n_blocks, "T": model.n_layers,
             "labels": model.labels.tolist(), "theta": model.theta.tolist()}
    else:
        raise TypeError(f"not a model: {type(model).__name__}")
    ids = list(node_ids) if node_ids is not None else [str(k) for k in range(model.n_nodes)]
    if len(ids) != model.n_nodes:
        raise ValueError("node_ids length must equal N")
    d.update({
        "schema_version": SCHEMA_VERSION,
        "node_ids": ids,
        "omega": model.omega.tolist(),
        "loglik": _finite_or_none(loglik),
        "objective": _finite_or_none(objective),
        "seed": seed,
        "config": config or {},
    })
    return d


def model_from_dict(d: dict):
    """Returns ``(model, node_ids)``."""
    if d.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported model schema version {d.get('schema_version')}")
    try:
        kind = d["kind"]
        N, K, T = int(d["N"]), int(d["K"]), int(d["T"])
        omega = np.asarray(d["omega"], dtype=np.float64).reshape(K, K, T)
        if kind == "tdmm":
            model = MixedModel(np.asarray(d["C"], dtype=np.float64).reshape(N, K), omega)
        elif kind in ("tdd", "static"):
            model = DiscreteModel(d["labels"], d["theta"], omega, kind=kind)
            if model.n_nodes != N:
                raise ValueError("labels length does not match N")
        else:
            raise FormatError(f"unknown model kind {kind!r}")
    except (KeyError, ValueError) as exc:
        raise FormatError(f"invalid model file: {exc}") from exc
    node_ids = d.get("node_ids") or [str(k) for k in range(N)]
    return model, node_ids


def save_model(path: PathLike, model, **kw) -> None:
    write_json(path, model_to_dict(model, **kw))


def load_model(path: PathLike):
    return model_from_dict(read_json(path))


def write_omega_csv(path: PathLike, omega) -> None:
    omega = np.asarray(omega)
    K, _, T = omega.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["g", "h", "t", "value"])
        for g in range(K):
            for h in range(K):
                for t in range(T):
                    w.writerow([g, h, t, repr(float(omega[g, h, t]))])


def write_rows_csv(path: PathLike, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
