"""Second-order statistics behind every closed-form SINR and OBE design.

Everything is expressed for a subset of APs stacked in the collective form
(entry ``i`` belongs to AP ``aps[i // N]``). The vectorised combiner is
``w = vec(W)`` (column-major), so ``w[c * D + a] = W[a, c]`` and a generic
quadratic SINR reads ``p_k |w^H r|^2 / (w^H Gamma w)``.

Two LoS models are handled. With random phase-shifts the LoS parts of two
different UEs (or two different APs) are uncorrelated; without them (phases
perfectly compensated) LoS outer products of all UE/AP pairs survive.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from ..linalg import herm, vec


class CollectiveView:
    """Stacked statistics of the APs ``aps`` (all APs by default)."""

    def __init__(self, stats, aps=None, phase_shifts=None):
        self.stats = stats
        self.aps = list(range(stats.M)) if aps is None else [int(m) for m in np.atleast_1d(aps)]
        self.phase = stats.phase_shifts if phase_shifts is None else bool(phase_shifts)
        self.N = stats.N
        self.D = len(self.aps) * self.N
        self.ap_of = np.repeat(np.arange(len(self.aps)), self.N)
        self.p = stats.p
        self.tau_p = stats.tau_p
        self.sigma2 = stats.sigma2
        self.same_pilot = stats.pilots.same_pilot()
        self.gbar = np.stack([np.concatenate([stats.gbar[m, k] for m in self.aps])
                              for k in range(stats.K)])
        self._cache = {}

    @property
    def K(self):
        return self.stats.K

    def _blockdiag(self, blocks):
        return sla.block_diag(*blocks)

    def R(self, l):
        return self._get(("R", l), lambda: self._blockdiag([self.stats.R[m, l] for m in self.aps]))

    def Rhat(self, k):
        return self._get(("Rhat", k),
                         lambda: self._blockdiag([self.stats.Rhat[m, k] for m in self.aps]))

    def T(self, l, k):
        """``R_l Psi_k^{-1} R_k`` (block diagonal; meaningful when l shares k's pilot)."""
        return self._get(("T", l, k), lambda: self._blockdiag(
            [self.stats.R[m, l] @ self.stats.PsiInvR[m, k] for m in self.aps]))

    def G(self, l, k):
        """``E{LoS_l LoS_k^H}`` including the phase-shift statistics."""
        def build():
            if not self.phase:
                return np.outer(self.gbar[l], self.gbar[k].conj())
            if l != k:
                return np.zeros((self.D, self.D), dtype=complex)
            return self._blockdiag([np.outer(self.stats.gbar[m, k], self.stats.gbar[m, k].conj())
                                    for m in self.aps])
        return self._get(("G", l, k), build)

    def Gbar_block(self, k):
        """``blockdiag(gbar_mk gbar_mk^H)`` irrespective of the LoS model."""
        return self._get(("Gb", k), lambda: self._blockdiag(
            [np.outer(self.stats.gbar[m, k], self.stats.gbar[m, k].conj()) for m in self.aps]))

    def Rbar(self, k):
        """``E{ghat_k ghat_k^H} = E{g_k ghat_k^H}``."""
        return self._get(("Rbar", k), lambda: self.G(k, k) + self.Rhat(k))

    def B(self, l, k):
        """``E{g_l ghat_k^H}``."""
        def build():
            out = self.G(l, k).copy()
            if self.same_pilot[l, k]:
                out += np.sqrt(self.p[k] * self.p[l]) * self.tau_p * self.T(l, k)
            return out
        return self._get(("B", l, k), build)

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def upsilon(gbar_stack, N):
    """``E{(x x^H)^T kron (x x^H)}`` for ``x`` = stacked LoS with i.i.d. AP phases.

    Built block by block from the two phase pairings that survive the
    expectation (rows ``(c, a)``, columns ``(d, b)``): ``ap(d)=ap(c)`` with
    ``ap(a)=ap(b)``, or ``ap(d)=ap(b)`` with ``ap(c)=ap(a)``.
    """
    x = np.asarray(gbar_stack)
    D = x.size
    M = D // N
    out = np.zeros((D, D, D, D), dtype=complex)     # indexed [c, a, d, b]
    blocks = x.reshape(M, N)
    sl = [slice(m * N, (m + 1) * N) for m in range(M)]
    for m1 in range(M):
        for m3 in range(M):
            # first pairing: c, d on AP m1 and a, b on AP m3
            A11 = np.outer(blocks[m1], blocks[m1].conj())      # [d, c]
            A33 = np.outer(blocks[m3], blocks[m3].conj())      # [a, b]
            out[sl[m1], sl[m3], sl[m1], sl[m3]] += np.einsum("dc,ab->cadb", A11, A33)
            if m1 == m3:
                continue
            # second pairing: d, b on AP m1 and c, a on AP m3
            Adc = np.outer(blocks[m1], blocks[m3].conj())      # d on m1, c on m3
            Aab = np.outer(blocks[m3], blocks[m1].conj())      # a on m3, b on m1
            out[sl[m3], sl[m3], sl[m1], sl[m1]] += np.einsum("dc,ab->cadb", Adc, Aab)
    return out.reshape(D * D, D * D)


@dataclass
class ClosedFormTerms:
    """Quadratic-form ingredients of one UE's UatF SINR.

    ``Gamma`` is the denominator matrix (interference, estimation error and
    noise, with the desired-signal mean already removed) and ``r`` the
    numerator vector, so that ``SINR(w) = p_k |w^H r|^2 / (w^H Gamma w)``.
    """

    k: int
    p_k: float
    Gamma: np.ndarray
    r: np.ndarray
    parts: dict = field(default_factory=dict)

    def sinr(self, w):
        w = np.asarray(w).reshape(-1)
        num = self.p_k * abs(np.vdot(w, self.r)) ** 2
        den = np.vdot(w, self.Gamma @ w).real
        return num / den if den > 0 else 0.0


def centralized_gamma(view, k, keep_parts=False):
    """Denominator matrix of the centralized UatF SINR for ``v = W ghat_k``.

    With phase-shifts this is the OBE system of the closed-form C-OBE design
    (Kronecker terms over all UEs, co-pilot rank-one terms, the LoS fourth
    moment ``Upsilon`` and noise). Without phase-shifts the LoS cross terms
    of co-pilot UEs replace ``Upsilon``. Restricting ``view`` to one AP gives
    the per-AP system of the DL-OBE design.
    """
    p, tau = view.p, view.tau_p
    D = view.D
    I = np.eye(D)
    Gkk = view.G(k, k)
    Rbar = view.Rbar(k)
    # sum_l p_l [G_kk^T x G_ll + G_kk^T x R_l + Rhat_k^T x G_ll + Rhat_k^T x R_l]
    second = sum(p[l] * (view.G(l, l) + view.R(l)) for l in range(view.K))
    kron_term = np.kron(Rbar.T, second)
    copilot = np.zeros((D * D, D * D), dtype=complex)
    cross = np.zeros_like(copilot)
    for l in np.flatnonzero(view.same_pilot[k]):
        rt = vec(view.T(l, k))
        copilot += p[k] * p[l] ** 2 * tau ** 2 * np.outer(rt, rt.conj())
        gl = vec(view.G(l, k))
        if np.any(gl):
            s = p[l] * np.sqrt(p[k] * p[l]) * tau
            cross += s * (np.outer(gl, rt.conj()) + np.outer(rt, gl.conj()))
    if view.phase:
        los4 = p[k] * (upsilon(view.gbar[k], view.N) - np.kron(Gkk.T, Gkk))
    else:
        los4 = np.zeros_like(copilot)
    r = vec(Rbar)
    noise = view.sigma2 * np.kron(Rbar.T, I)
    Gamma = kron_term + copilot + cross + los4 - p[k] * np.outer(r, r.conj()) + noise
    Gamma = 0.5 * (Gamma + herm(Gamma))
    parts = {}
    if keep_parts:
        parts = dict(kron=kron_term, copilot=copilot, cross=cross, los4=los4, noise=noise)
    return ClosedFormTerms(k, float(p[k]), Gamma, r, parts)


def block_support(M, N):
    """Indices of ``vec(W)`` (``W`` of size MN) that lie in the AP-diagonal blocks.

    Ordered AP by AP and, within AP ``m``, as ``vec(W_m)``; this is the
    stacking ``[vec(W_1); ...; vec(W_M)]`` of the distributed designs.
    """
    D = M * N
    idx = []
    for m in range(M):
        for c in range(N):
            for a in range(N):
                idx.append((m * N + c) * D + m * N + a)
    return np.asarray(idx)


@dataclass
class DistributedTerms:
    """Ingredients of the equal-weight distributed SINR with local BE matrices."""

    k: int
    p_k: float
    Lambda: np.ndarray
    h: np.ndarray
    L1: np.ndarray = None
    L2: np.ndarray = None
    L3: np.ndarray = None
    L4: np.ndarray = None
    b: dict = field(default_factory=dict)

    def sinr(self, w):
        w = np.asarray(w).reshape(-1)
        num = self.p_k * abs(np.vdot(w, self.h)) ** 2
        den = np.vdot(w, self.Lambda @ w).real
        return num / den if den > 0 else 0.0


def distributed_lambda(stats, k, phase_shifts=None):
    """Denominator matrix of the equal-weight distributed SINR (DG-OBE system).

    ``Lambda = sum_l L1_l + sum_l (L2_l + L3_l) - p_k h h^H + sigma2 L4``:
    block-diagonal local second moments (L1, L2, L4) plus the cross-AP
    coupling ``L3 = p_l (b b^H - blockdiag(b_m b_m^H))`` of ``b_m = vec(E{g_ml ghat_mk^H})``.
    With phase-shifts ``b`` vanishes unless ``l`` shares ``k``'s pilot.
    """
    phase = stats.phase_shifts if phase_shifts is None else bool(phase_shifts)
    M, N, K = stats.M, stats.N, stats.K
    p, tau = stats.p, stats.tau_p
    n2 = N * N
    views = [CollectiveView(stats, [m], phase) for m in range(M)]
    same = stats.pilots.same_pilot()
    I = np.eye(N)

    L1 = [np.zeros((n2, n2), dtype=complex) for _ in range(M)]
    L2 = [np.zeros((n2, n2), dtype=complex) for _ in range(M)]
    L4 = []
    h = np.concatenate([vec(v.Rbar(k)) for v in views])
    for m, v in enumerate(views):
        Rbar = v.Rbar(k)
        Gkk = v.Gbar_block(k)
        for l in range(K):
            Gll = v.Gbar_block(l)
            L1[m] += p[l] * (np.kron(Gkk.T, Gll) + np.kron(Gkk.T, v.R(l))
                             + np.kron(v.Rhat(k).T, Gll) + np.kron(v.Rhat(k).T, v.R(l)))
            if not same[k, l]:
                continue
            rt = vec(v.T(l, k))
            L2[m] += p[k] * p[l] ** 2 * tau ** 2 * np.outer(rt, rt.conj())
            gl = vec(v.G(l, k))
            if np.any(gl):
                s = p[l] * np.sqrt(p[k] * p[l]) * tau
                L2[m] += s * (np.outer(gl, rt.conj()) + np.outer(rt, gl.conj()))
        L4.append(np.kron(Rbar.T, I))

    L3 = np.zeros((M * n2, M * n2), dtype=complex)
    bvecs = {}
    for l in range(K):
        if phase and not same[k, l]:
            continue
        b = np.concatenate([vec(v.B(l, k)) for v in views])
        if not np.any(b):
            continue
        bvecs[l] = b
        outer = np.outer(b, b.conj())
        for m in range(M):
            s = slice(m * n2, (m + 1) * n2)
            outer[s, s] = 0.0
        L3 += p[l] * outer

    L1 = sla.block_diag(*L1)
    L2 = sla.block_diag(*L2)
    L4 = sla.block_diag(*L4)
    Lam = L1 + L2 + L3 - p[k] * np.outer(h, h.conj()) + stats.sigma2 * L4
    Lam = 0.5 * (Lam + herm(Lam))
    return DistributedTerms(k, float(p[k]), Lam, h, L1, L2, L3, L4, bvecs)
