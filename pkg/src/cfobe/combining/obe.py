"""Optimal bilinear equalizer designs: centralized, distributed-global, distributed-local.

Each design maximises a UatF-type SINR that is a generalised Rayleigh
quotient in ``w = vec(W)``. The Monte-Carlo variants build the quotient from
sample moments of a channel batch; the closed-form variants from channel
statistics only. Stored solutions are scaled to unit Frobenius norm.
"""

from typing import NamedTuple
import warnings

import numpy as np

from ..linalg import HermitianForm, NearSingularWarning, rayleigh_max, vec, unvec
from .base import BEMatrix
from .terms import (CollectiveView, centralized_gamma, distributed_lambda, block_support)

MC_CHUNK = 250


class OBEDesign(NamedTuple):
    W: BEMatrix
    sinr: np.ndarray        # maximised objective per UE (per AP-UE pair for DL-OBE)
    flagged: np.ndarray     # regularisation had to be escalated
    terms: list = None


def _solve(b, A):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSingularWarning)
        sol = rayleigh_max(HermitianForm(b, A))
    return sol


def _unit(w):
    n = np.linalg.norm(w)
    return w / n if n > 0 else w


# ---------------------------------------------------------------------------
# Monte-Carlo moment systems
# ---------------------------------------------------------------------------

def interference_moment(batch, p):
    """Per-sample ``sum_l p_l g_l g_l^H`` in collective form, (S, MN, MN)."""
    G = batch.collective("g")
    return np.einsum("l,sld,sle->sde", p, G, G.conj())


def mc_system(batch, stats, k, groups, X=None):
    """Sample version of the OBE quotient restricted to block support.

    ``groups`` lists collective index arrays; ``W`` may only be nonzero on
    ``W[grp_i, grp_i]`` blocks (one group of all indices = unrestricted).
    Returns ``(A, e)`` with ``A = sum_l p_l E{z z^H} - p_k e e^H + sigma2 Theta``,
    ``z = vec(g_l ghat_k^H)`` and ``e = vec(E{g_k ghat_k^H})`` on the support.
    """
    p = stats.p
    if X is None:
        X = interference_moment(batch, p)
    Gh = batch.collective("ghat")[:, k]                # (S, D)
    Gk = batch.collective("g")[:, k]
    S = Gh.shape[0]
    sizes = [len(g) ** 2 for g in groups]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    A = np.zeros((offs[-1], offs[-1]), dtype=complex)
    for s0 in range(0, S, MC_CHUNK):
        sl = slice(s0, s0 + MC_CHUNK)
        for i, gi in enumerate(groups):
            for j, gj in enumerate(groups):
                # entry ((c, a), (d, b)) = sum_s conj(gh_c) gh_d X[a, b]
                U = np.einsum("sc,sd->cds", Gh[sl][:, gi].conj(), Gh[sl][:, gj])
                V = X[sl][:, gi][:, :, gj]                         # (s, a, b)
                blk = U.reshape(len(gi) * len(gj), -1) @ V.reshape(V.shape[0], -1)
                blk = blk.reshape(len(gi), len(gj), len(gi), len(gj))  # c, d, a, b
                A[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] += (
                    blk.transpose(0, 2, 1, 3).reshape(sizes[i], sizes[j]))
    A /= S
    e = np.concatenate([vec(Gk[:, g].T @ Gh[:, g].conj() / S) for g in groups])
    theta = np.zeros_like(A)
    for i, g in enumerate(groups):
        Rg = Gh[:, g].T @ Gh[:, g].conj() / S                      # E{ghat ghat^H}
        theta[offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = np.kron(Rg.T, np.eye(len(g)))
    A = A - p[k] * np.outer(e, e.conj()) + stats.sigma2 * theta
    return 0.5 * (A + A.conj().T), e


def _ap_groups(M, N, aps=None):
    aps = range(M) if aps is None else aps
    return [np.arange(m * N, (m + 1) * N) for m in aps]


def c_obe_mc(batch, stats, support="full"):
    """Centralized OBE from sample moments.

    ``support="block"`` confines ``W`` to its AP-diagonal blocks, which is
    where the optimum lies under the random phase-shift model; it turns an
    (MN)^2 system into M*N^2.
    """
    M, N, K = stats.M, stats.N, stats.K
    D = M * N
    groups = [np.arange(D)] if support == "full" else _ap_groups(M, N)
    X = interference_moment(batch, stats.p)
    W = np.zeros((K, D, D), dtype=complex)
    sinr, flagged = np.zeros(K), np.zeros(K, dtype=bool)
    for k in range(K):
        A, e = mc_system(batch, stats, k, groups, X)
        sol = _solve(e, A)
        sinr[k] = stats.p[k] * sol.value
        flagged[k] = sol.flagged
        W[k] = _place(_unit(sol.w), groups, D)
    return OBEDesign(BEMatrix("centralized", W, "mc_obe"), sinr, flagged)


def _place(w, groups, D):
    out = np.zeros((D, D), dtype=complex)
    off = 0
    for g in groups:
        n = len(g)
        out[np.ix_(g, g)] = unvec(w[off:off + n * n], n)
        off += n * n
    return out


def dg_obe_mc(batch, stats):
    """Distributed OBE from sample moments (global statistics, local matrices)."""
    M, N, K = stats.M, stats.N, stats.K
    groups = _ap_groups(M, N)
    X = interference_moment(batch, stats.p)
    W = np.zeros((M, K, N, N), dtype=complex)
    sinr, flagged = np.zeros(K), np.zeros(K, dtype=bool)
    for k in range(K):
        A, e = mc_system(batch, stats, k, groups, X)
        sol = _solve(e, A)
        sinr[k] = stats.p[k] * sol.value
        flagged[k] = sol.flagged
        w = _unit(sol.w)
        for m in range(M):
            W[m, k] = unvec(w[m * N * N:(m + 1) * N * N], N)
    return OBEDesign(BEMatrix("local", W, "mc_obe"), sinr, flagged)


def dl_obe_mc(batch, stats, m=None, k=None):
    """Local OBE from AP ``m``'s own samples; all pairs when ``m``/``k`` are None."""
    M, N, K = stats.M, stats.N, stats.K
    aps = range(M) if m is None else [m]
    ues = range(K) if k is None else [k]
    W = np.zeros((M, K, N, N), dtype=complex)
    sinr = np.full((M, K), np.nan)
    flagged = np.zeros((M, K), dtype=bool)
    for mm in aps:
        # restrict the batch to AP mm (locality: nothing from other APs is read)
        local = type(batch)(batch.theta[:, [mm]], batch.g[:, [mm]], batch.ghat[:, [mm]])
        groups = [np.arange(N)]
        X = interference_moment(local, stats.p)
        for kk in ues:
            A, e = mc_system(local, stats, kk, groups, X)
            sol = _solve(e, A)
            sinr[mm, kk] = stats.p[kk] * sol.value
            flagged[mm, kk] = sol.flagged
            W[mm, kk] = unvec(_unit(sol.w), N)
    return OBEDesign(BEMatrix("local", W, "mc_obe"), sinr, flagged)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def c_obe_closed(stats, keep_terms=False, support="full"):
    """Closed-form centralized OBE, ``w = Gamma^{-1} r`` per UE.

    Uses the random-phase LoS model or the phase-compensated one according to
    ``stats.phase_shifts``. ``support="block"`` solves only on the AP-diagonal
    blocks (exact under random phases, a restriction otherwise).
    """
    M, N, K = stats.M, stats.N, stats.K
    D = M * N
    view = CollectiveView(stats)
    idx = None if support == "full" else block_support(M, N)
    W = np.zeros((K, D, D), dtype=complex)
    sinr, flagged = np.zeros(K), np.zeros(K, dtype=bool)
    terms = []
    for k in range(K):
        t = centralized_gamma(view, k)
        Gam, r = (t.Gamma, t.r) if idx is None else (t.Gamma[np.ix_(idx, idx)], t.r[idx])
        sol = _solve(r, Gam)
        sinr[k] = stats.p[k] * sol.value
        flagged[k] = sol.flagged
        w = _unit(sol.w)
        if idx is None:
            W[k] = unvec(w, D)
        else:
            full = np.zeros(D * D, dtype=complex)
            full[idx] = w
            W[k] = unvec(full, D)
        if keep_terms:
            terms.append(t)
    return OBEDesign(BEMatrix("centralized", W, "closed_obe"), sinr, flagged,
                     terms if keep_terms else None)


def c_obe_closed_nophase(stats, keep_terms=False):
    """Closed-form centralized OBE for phase-compensated LoS (no random phases)."""
    if stats.phase_shifts:
        raise ValueError("c_obe_closed_nophase needs statistics with phase_shifts off")
    return c_obe_closed(stats, keep_terms)


def dg_obe_closed(stats, keep_terms=False):
    """Closed-form distributed OBE, ``w = Lambda^{-1} h`` stacked over APs."""
    M, N, K = stats.M, stats.N, stats.K
    n2 = N * N
    W = np.zeros((M, K, N, N), dtype=complex)
    sinr, flagged = np.zeros(K), np.zeros(K, dtype=bool)
    terms = []
    for k in range(K):
        t = distributed_lambda(stats, k)
        sol = _solve(t.h, t.Lambda)
        sinr[k] = stats.p[k] * sol.value
        flagged[k] = sol.flagged
        w = _unit(sol.w)
        for m in range(M):
            W[m, k] = unvec(w[m * n2:(m + 1) * n2], N)
        if keep_terms:
            terms.append(t)
    return OBEDesign(BEMatrix("local", W, "closed_obe"), sinr, flagged,
                     terms if keep_terms else None)


def dl_obe_closed(stats, m=None, k=None, keep_terms=False):
    """Closed-form local OBE from AP ``m``'s statistics only (all pairs by default)."""
    M, N, K = stats.M, stats.N, stats.K
    aps = range(M) if m is None else [m]
    ues = range(K) if k is None else [k]
    W = np.zeros((M, K, N, N), dtype=complex)
    sinr = np.full((M, K), np.nan)
    flagged = np.zeros((M, K), dtype=bool)
    terms = {}
    for mm in aps:
        view = CollectiveView(stats, [mm])
        for kk in ues:
            t = centralized_gamma(view, kk)
            sol = _solve(t.r, t.Gamma)
            sinr[mm, kk] = stats.p[kk] * sol.value
            flagged[mm, kk] = sol.flagged
            W[mm, kk] = unvec(_unit(sol.w), N)
            if keep_terms:
                terms[mm, kk] = t
    return OBEDesign(BEMatrix("local", W, "closed_obe"), sinr, flagged,
                     terms if keep_terms else None)
