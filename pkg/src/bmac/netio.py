"""JSON network and covariance files.

Network document::

    {
      "L": 2,
      "links": [{"tx_group": 0, "rx_group": 0, "nt": 2, "nr": 3}, ...],
      "H": [[H_00, H_01], [H_10, H_11]],
      "phi": [[0, 1], [0, 0]],
      "weights": [1.0, 1.0],
      "power": 10.0,
      "W": [...],          # optional per-link noise covariances
      "W_hat": [...]       # optional per-link linear-constraint matrices
    }

Every complex matrix is a row-major nested list whose leaves are
``[re, im]`` pairs.  Covariance documents are
``{"role": "forward" | "reverse", "sigma": [matrix, ...]}``.
NaN and infinities are rejected on read.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .netmodel import Network, validate_network
from .streams import CovarianceSet

__all__ = [
    "network_to_dict",
    "network_from_dict",
    "save_network",
    "load_network",
    "covs_to_dict",
    "covs_from_dict",
    "save_covs",
    "load_covs",
    "atomic_write",
]


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} in input")


def _enc(m) -> list:
    m = np.asarray(m, dtype=complex)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def _dec(x, shape=None) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 0, 2) if shape is None else a.reshape(*shape, 2)
    if a.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite matrix entry")
    out = a[..., 0] + 1j * a[..., 1]
    return out.reshape(shape) if shape is not None else out


def network_to_dict(net: Network) -> dict:
    d = {
        "L": net.L,
        "links": [
            {"tx_group": net.tx_group[l], "rx_group": net.rx_group[l], "nt": net.nt[l], "nr": net.nr[l]}
            for l in range(net.L)
        ],
        "H": [[_enc(h) for h in row] for row in net.H],
        "phi": net.phi.tolist(),
        "weights": net.weights.tolist(),
        "power": net.power,
    }
    if net.noise_covs is not None:
        d["W"] = [_enc(net.noise(l)) for l in range(net.L)]
    if net.link_constraints is not None:
        d["W_hat"] = [_enc(net.constraint(l)) for l in range(net.L)]
    return d


def network_from_dict(d: dict, validate: bool = True) -> Network:
    try:
        L = int(d["L"])
        links = d["links"]
        if len(links) != L:
            raise ValueError(f"'links' has {len(links)} entries, expected {L}")
        nt = [int(x["nt"]) for x in links]
        nr = [int(x["nr"]) for x in links]
        H = [[_dec(d["H"][l][k], (nr[l], nt[k])) for k in range(L)] for l in range(L)]
        W = [_dec(m, (nr[l], nr[l])) for l, m in enumerate(d["W"])] if "W" in d else None
        Wh = [_dec(m, (nt[l], nt[l])) for l, m in enumerate(d["W_hat"])] if "W_hat" in d else None
        net = Network(
            H=H,
            phi=np.asarray(d["phi"], dtype=int),
            weights=np.asarray(d["weights"], dtype=float),
            power=float(d["power"]),
            link_constraints=Wh,
            noise_covs=W,
            tx_group=[int(x["tx_group"]) for x in links],
            rx_group=[int(x["rx_group"]) for x in links],
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed network document: {exc!r}") from exc
    if validate:
        errs = validate_network(net)
        if errs:
            raise ValueError("invalid network: " + "; ".join(errs))
    return net


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _loads(text: str) -> dict:
    return json.loads(text, parse_constant=_reject_constant)


def save_network(net: Network, path) -> None:
    atomic_write(path, json.dumps(network_to_dict(net)) + "\n")


def load_network(path) -> Network:
    return network_from_dict(_loads(Path(path).read_text()))


def covs_to_dict(covs) -> dict:
    return {"role": getattr(covs, "role", "forward"), "sigma": [_enc(s) for s in covs]}


def covs_from_dict(d: dict) -> CovarianceSet:
    return CovarianceSet(tuple(_dec(s) for s in d["sigma"]), d.get("role", "forward"))


def save_covs(covs, path) -> None:
    atomic_write(path, json.dumps(covs_to_dict(covs)) + "\n")


def load_covs(path) -> CovarianceSet:
    return covs_from_dict(_loads(Path(path).read_text()))
