"""Large-scale fading decoding weights at the CPU."""

import numpy as np

from ..linalg import HermitianForm, rayleigh_max


def lsfd_weights(Xi, b, D, p, k, sigma2):
    """Optimal LSFD vector for UE ``k`` and the SINR it attains.

    ``Xi`` is the (K, M, M) stack of ``E{b_kl b_kl^H}`` over interferers l,
    ``b`` the mean effective channel ``E{b_kk}`` (M,), and ``D`` the diagonal of
    ``E{||v_mk||^2}`` (M,). Returns ``(a, sinr)`` with
    ``a = (sum_l p_l Xi_l - p_k b b^H + sigma2 diag(D))^{-1} b``.
    """
    b = np.asarray(b, dtype=complex)
    A = np.einsum("l,lij->ij", p, Xi) - p[k] * np.outer(b, b.conj()) + sigma2 * np.diag(D)
    A = 0.5 * (A + A.conj().T)
    sol = rayleigh_max(HermitianForm(b, A))
    return sol.w, float(p[k] * sol.value)


def lsfd_sinr(a, Xi, b, D, p, k, sigma2):
    """LSFD SINR for a given weight vector ``a`` (e.g. equal weights)."""
    a = np.asarray(a, dtype=complex)
    num = p[k] * abs(np.vdot(a, b)) ** 2
    A = np.einsum("l,lij->ij", p, Xi) - p[k] * np.outer(b, b.conj()) + sigma2 * np.diag(D)
    den = np.vdot(a, A @ a).real
    return num / den if den > 0 else 0.0
