"""Combiner containers and the MR / MMSE / bilinear-equalizer constructions."""

from dataclasses import dataclass
import json

import numpy as np
from scipy import linalg as sla

PROVENANCES = ("identity", "mc_obe", "closed_obe", "manual")
SCOPES = ("centralized", "local")


@dataclass(frozen=True)
class BEMatrix:
    """Statistics-based equalizer matrices for all UEs.

    ``values`` has shape ``(K, MN, MN)`` for the centralized scope and
    ``(M, K, N, N)`` for the local scope (one matrix per AP-UE pair).
    """

    scope: str
    values: np.ndarray
    provenance: str = "manual"

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        v = np.asarray(self.values)
        want = 3 if self.scope == "centralized" else 4
        if v.ndim != want or v.shape[-1] != v.shape[-2]:
            raise ValueError(f"{self.scope} BE matrices need shape "
                             f"{'(K, MN, MN)' if want == 3 else '(M, K, N, N)'}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("BE matrix has non-finite entries")

    @classmethod
    def identity(cls, scope, M, N, K):
        if scope == "centralized":
            vals = np.broadcast_to(np.eye(M * N, dtype=complex), (K, M * N, M * N)).copy()
        else:
            vals = np.broadcast_to(np.eye(N, dtype=complex), (M, K, N, N)).copy()
        return cls(scope, vals, "identity")

    def local(self, m, k):
        if self.scope != "local":
            raise ValueError("not a local BE matrix")
        return self.values[m, k]

    def to_local(self, N):
        """Diagonal AP blocks of a centralized matrix as a local BEMatrix."""
        if self.scope == "local":
            return self
        K, D, _ = self.values.shape
        M = D // N
        vals = np.empty((M, K, N, N), dtype=complex)
        for m in range(M):
            vals[m] = self.values[:, m * N:(m + 1) * N, m * N:(m + 1) * N]
        return BEMatrix("local", vals, self.provenance)

    def to_centralized(self):
        if self.scope == "centralized":
            return self
        M, K = self.values.shape[:2]
        vals = np.stack([sla.block_diag(*self.values[:, k]) for k in range(K)])
        return BEMatrix("centralized", vals, self.provenance)

    def to_json(self):
        v = np.asarray(self.values)
        return json.dumps({"scope": self.scope, "provenance": self.provenance,
                           "shape": list(v.shape),
                           "values": np.stack([v.real, v.imag], axis=-1).tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        arr = np.asarray(d["values"], dtype=float)
        vals = arr[..., 0] + 1j * arr[..., 1]
        if list(vals.shape) != d["shape"]:
            raise ValueError("BE matrix JSON shape mismatch")
        return cls(d["scope"], vals, d["provenance"])


@dataclass(frozen=True)
class CombinerSet:
    """Combining vectors for a batch.

    ``v`` is ``(S, K, MN)`` for centralized schemes and ``(S, M, K, N)`` for
    local ones. ``W`` is set for bilinear schemes (fixed across the batch);
    ``per_sample`` marks schemes that recompute the combiner every block.
    """

    scheme: str
    scope: str
    v: np.ndarray
    W: BEMatrix = None
    a: np.ndarray = None
    per_sample: bool = False

    def centralized_v(self):
        """Local combiners stacked as collective vectors (S, K, MN)."""
        if self.scope == "centralized":
            return self.v
        S, M, K, N = self.v.shape
        return np.swapaxes(self.v, 1, 2).reshape(S, K, M * N)


def be_combine(W, batch, scheme=None):
    """``v = W ghat`` per UE (and per AP for local matrices), W fixed."""
    vals = np.asarray(W.values)
    S, M, K, N = batch.ghat.shape
    if W.scope == "centralized":
        if vals.shape != (K, M * N, M * N):
            raise ValueError(f"centralized W must be {(K, M * N, M * N)}, got {vals.shape}")
        v = np.einsum("kij,skj->ski", vals, batch.collective("ghat"))
    else:
        if vals.shape != (M, K, N, N):
            raise ValueError(f"local W must be {(M, K, N, N)}, got {vals.shape}")
        v = np.einsum("mkij,smkj->smki", vals, batch.ghat)
    name = scheme or ("be-" + W.scope)
    return CombinerSet(name, W.scope, v, W=W)


def c_mr(batch, stats=None):
    K = batch.ghat.shape[2]
    M, N = batch.ghat.shape[1], batch.ghat.shape[3]
    return CombinerSet("C-MR", "centralized", batch.collective("ghat"),
                       W=BEMatrix.identity("centralized", M, N, K))


def l_mr(batch, stats=None):
    S, M, K, N = batch.ghat.shape
    return CombinerSet("L-MR", "local", batch.ghat.copy(),
                       W=BEMatrix.identity("local", M, N, K))


def error_noise_cov(stats):
    """``sum_l p_l C_l + sigma2 I`` per AP, shape (M, N, N)."""
    Z = np.einsum("k,mkij->mij", stats.p, stats.C)
    return Z + stats.sigma2 * np.eye(stats.N)


def c_mmse(batch, stats):
    """``v_k = p_k (sum_l p_l (ghat_l ghat_l^H + C_l) + sigma2 I)^{-1} ghat_k`` per block."""
    H = batch.collective("ghat")                       # (S, K, D)
    Z = sla.block_diag(*error_noise_cov(stats))
    A = np.einsum("l,sld,sle->sde", stats.p, H, H.conj()) + Z
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    X = np.linalg.solve(A, np.swapaxes(H, 1, 2))       # (S, D, K)
    v = np.swapaxes(X, 1, 2) * stats.p[None, :, None]
    return CombinerSet("C-MMSE", "centralized", v, per_sample=True)


def l_mmse(batch, stats):
    """Local MMSE at every AP from its own estimates."""
    H = batch.ghat                                     # (S, M, K, N)
    Z = error_noise_cov(stats)
    A = np.einsum("l,smli,smlj->smij", stats.p, H, H.conj()) + Z[None]
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    X = np.linalg.solve(A, np.swapaxes(H, 2, 3))       # (S, M, N, K)
    v = np.swapaxes(X, 2, 3) * stats.p[None, None, :, None]
    return CombinerSet("L-MMSE", "local", v, per_sample=True)
