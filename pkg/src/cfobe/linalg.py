"""Complex linear-algebra kernels shared by the estimators and combiners.

All vectorisation is column-major (Fortran order) so that
``vec(A @ B @ C) == kron(C.T, A) @ vec(B)`` holds everywhere in the package.
"""

from dataclasses import dataclass
from typing import NamedTuple
import warnings

import numpy as np
from scipy import linalg as sla

# relative diagonal loading applied before factorising PSD denominators
REGULARIZATION = 1e-12


class IndefiniteSystemError(np.linalg.LinAlgError):
    """Raised when a Hermitian system cannot be factorised as positive definite."""


class NearSingularWarning(RuntimeWarning):
    pass


def vec(M):
    """Stack the columns of ``M`` into one vector."""
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"vec expects a 2-D matrix, got shape {M.shape}")
    return M.reshape(-1, order="F")


def unvec(v, rows, cols=None):
    """Inverse of :func:`vec`; ``cols`` defaults to ``rows`` (square)."""
    v = np.asarray(v)
    cols = rows if cols is None else cols
    if v.ndim != 1 or v.size != rows * cols:
        raise ValueError(f"cannot reshape vector of size {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def kron(A, B):
    return np.kron(np.asarray(A), np.asarray(B))


def herm(A):
    return np.conj(np.swapaxes(A, -1, -2))


def is_hermitian(A, rtol=1e-12):
    A = np.asarray(A)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    return np.linalg.norm(A - herm(A)) <= rtol * scale


def regularize(A, eps=REGULARIZATION):
    """Return ``A + eps * tr(A)/n * I`` (after Hermitian symmetrisation)."""
    A = 0.5 * (A + herm(A))
    n = A.shape[-1]
    load = eps * abs(np.trace(A).real) / n
    if load == 0.0:
        load = eps
    return A + load * np.eye(n)


def _cho(A):
    try:
        return sla.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IndefiniteSystemError(str(exc)) from exc


def hermitian_solve(A, B, eps=REGULARIZATION):
    """Solve ``A X = B`` for Hermitian positive-definite ``A`` by Cholesky.

    ``A`` is diagonally loaded by ``eps * tr(A)/n`` first. Raises
    :class:`IndefiniteSystemError` when the factorisation fails.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    factor = _cho(regularize(A, eps) if eps else 0.5 * (A + herm(A)))
    return sla.cho_solve(factor, np.asarray(B, dtype=np.result_type(A, B, complex)))


def solve_flagged(A, b, eps=REGULARIZATION, max_tries=6):
    """Hermitian PSD solve that escalates the diagonal load on failure.

    Returns ``(x, flagged)`` where ``flagged`` tells whether the loading had to
    be raised above ``eps`` (numerically indefinite or near-singular system).
    """
    for attempt in range(max_tries):
        try:
            x = hermitian_solve(A, b, eps * 100.0 ** attempt)
        except IndefiniteSystemError:
            continue
        if attempt:
            warnings.warn(f"system regularised with eps={eps * 100.0 ** attempt:g}",
                          NearSingularWarning, stacklevel=2)
        return x, attempt > 0
    raise IndefiniteSystemError("system stays indefinite after regularisation")


@dataclass(frozen=True)
class HermitianForm:
    """Generalised Rayleigh quotient ``|w^H b|^2 / (w^H A w)``."""

    b: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        if self.A.shape != (self.b.size, self.b.size):
            raise ValueError("numerator vector and denominator matrix dimensions differ")

    def quotient(self, w):
        w = np.asarray(w)
        num = abs(np.vdot(w, self.b)) ** 2
        den = np.vdot(w, self.A @ w).real
        return num / den


class RayleighSolution(NamedTuple):
    w: np.ndarray
    value: float
    flagged: bool = False


def rayleigh_max(form, eps=REGULARIZATION):
    """Maximise ``form.quotient`` at ``w* = A^{-1} b`` (defined up to scale).

    The maximum is ``b^H A^{-1} b``; ``flagged`` marks an escalated
    regularisation.
    """
    b = np.asarray(form.b)
    if not np.any(b):
        raise ValueError("numerator vector is zero")
    w, flagged = solve_flagged(form.A, b, eps)
    return RayleighSolution(w, float(np.vdot(b, w).real), flagged)
