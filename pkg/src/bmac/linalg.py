"""Small Hermitian linear-algebra helpers shared by every module.

All routines work on complex ``numpy`` arrays and never form explicit
inverses of positive-definite matrices; linear systems go through
Cholesky factors instead.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

__all__ = [
    "herm",
    "is_psd",
    "is_hermitian",
    "min_eig",
    "psd_sqrt",
    "psd_inv_sqrt",
    "logdet_pd",
    "pd_solve",
    "pd_inv",
    "project_psd",
    "phase_normalize",
]

PSD_RTOL = 1e-9
SQRT_FLOOR = 1e-14


def herm(x: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(x + x^H) / 2``."""
    x = np.asarray(x)
    return 0.5 * (x + x.conj().T)


def is_hermitian(x: np.ndarray, rtol: float = 1e-9) -> bool:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        return False
    scale = 1.0 + np.abs(x).max(initial=0.0)
    return bool(np.abs(x - x.conj().T).max(initial=0.0) <= rtol * scale)


def min_eig(x: np.ndarray) -> float:
    x = herm(x)
    if x.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(x)[0])


def is_psd(x: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    """PSD test with the tolerance ``lambda_min >= -rtol * (1 + lambda_max)``."""
    x = herm(x)
    if x.size == 0:
        return True
    ev = np.linalg.eigvalsh(x)
    return bool(ev[0] >= -rtol * (1.0 + max(ev[-1], 0.0)))


def _eigh_floor(x: np.ndarray):
    x = herm(x)
    ev, vec = np.linalg.eigh(x)
    floor = SQRT_FLOOR * max(float(np.real(np.trace(x))), 0.0)
    return np.maximum(ev, floor), vec


def psd_sqrt(x: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix (eigenvalues floored)."""
    ev, vec = _eigh_floor(x)
    return herm((vec * np.sqrt(ev)) @ vec.conj().T)


def psd_inv_sqrt(x: np.ndarray) -> np.ndarray:
    """Hermitian inverse square root of a positive-definite matrix.

    Eigenvalues are floored at ``1e-14 * trace``; a zero matrix raises.
    """
    ev, vec = _eigh_floor(x)
    if ev.size and ev[-1] <= 0.0:
        raise np.linalg.LinAlgError("inverse square root of a zero matrix")
    ev = np.maximum(ev, np.finfo(float).tiny)
    return herm((vec / np.sqrt(ev)) @ vec.conj().T)


def logdet_pd(x: np.ndarray) -> float:
    """Natural log-determinant of a Hermitian positive-definite matrix."""
    if x.shape[0] == 0:
        return 0.0
    c = np.linalg.cholesky(herm(x))
    return float(2.0 * np.sum(np.log(np.real(np.diag(c)))))


def pd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for Hermitian positive-definite ``a``."""
    c = sla.cho_factor(herm(a), lower=True, check_finite=False)
    return sla.cho_solve(c, b, check_finite=False)


def pd_inv(a: np.ndarray) -> np.ndarray:
    """Inverse of a Hermitian PD matrix via its Cholesky factor."""
    return herm(pd_solve(a, np.eye(a.shape[0], dtype=complex)))


def project_psd(x: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    ev, vec = np.linalg.eigh(herm(x))
    return herm((vec * np.maximum(ev, 0.0)) @ vec.conj().T)


def phase_normalize(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    v = np.array(v, dtype=complex, copy=True)
    if v.size == 0:
        return v
    idx = np.argmax(np.abs(v), axis=0)
    ph = v[idx, np.arange(v.shape[1])]
    mag = np.abs(ph)
    mag[mag == 0.0] = 1.0
    return v * (np.conj(ph) / mag)
