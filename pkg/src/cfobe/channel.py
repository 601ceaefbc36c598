"""Monte-Carlo sampling of channels and phase-aware MMSE estimates.

Random numbers come from fixed-size chunks of samples, each chunk seeded by
``SeedSequence([seed, *stream, chunk])``. A batch is therefore the same no
matter how many workers produced it.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import os
import struct

import numpy as np

from .linalg import herm

CHUNK = 250
WORKERS_ENV = "CFOBE_WORKERS"
_DUMP_MAGIC = b"CFCB"


def worker_count(default=1):
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, default)))
    except ValueError:
        return default


def covariance_factor(R, tol=1e-10):
    """Return ``L`` with ``L L^H = R`` from an eigen-decomposition.

    Works for rank-deficient ``R``; eigenvalues below ``-tol * max|eig|``
    are treated as a genuinely indefinite input.
    """
    R = 0.5 * (R + herm(R))
    lam, U = np.linalg.eigh(R)
    scale = np.max(np.abs(lam), axis=-1, keepdims=True)
    if np.any(lam < -tol * np.maximum(scale, np.finfo(float).tiny)):
        raise ValueError("covariance matrix is indefinite")
    return U * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]


def complex_normal(rng, shape):
    """Standard circularly-symmetric complex Gaussian, ``E|x|^2 = 1``."""
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def correlated_gaussian(R, rng, size=None):
    """Draw from CN(0, R); ``size`` prepends sample dimensions."""
    R = np.asarray(R, dtype=complex)
    L = covariance_factor(R)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    z = complex_normal(rng, shape + (R.shape[-1],))
    return z @ L.T


@dataclass(frozen=True)
class ChannelSample:
    theta: np.ndarray   # (M, K)
    g: np.ndarray       # (M, K, N)
    ghat: np.ndarray    # (M, K, N)

    def collective(self, which="g"):
        """Stacked (K, M*N) form; row k is ``[x_1k; ...; x_Mk]``."""
        x = getattr(self, which)
        return np.swapaxes(x, 0, 1).reshape(x.shape[1], -1)


@dataclass(frozen=True)
class ChannelBatch:
    """``count`` coherence blocks; arrays carry a leading sample axis."""

    theta: np.ndarray   # (S, M, K)
    g: np.ndarray       # (S, M, K, N)
    ghat: np.ndarray    # (S, M, K, N)

    @property
    def count(self):
        return self.g.shape[0]

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        if isinstance(i, slice):
            return ChannelBatch(self.theta[i], self.g[i], self.ghat[i])
        return ChannelSample(self.theta[i], self.g[i], self.ghat[i])

    def collective(self, which="g"):
        """Stacked (S, K, M*N) form of ``g``, ``ghat`` or ``error``."""
        x = self.error if which == "error" else getattr(self, which)
        S, M, K, N = x.shape
        return np.swapaxes(x, 1, 2).reshape(S, K, M * N)

    @property
    def error(self):
        return self.g - self.ghat

    @staticmethod
    def concat(batches):
        batches = list(batches)
        return ChannelBatch(*(np.concatenate([getattr(b, f) for b in batches])
                              for f in ("theta", "g", "ghat")))

    # binary dump: 4 little-endian uint32 (M, N, K, count) after a 4-byte
    # magic, then g and ghat as little-endian complex64 in (count, M, K, N) order
    def dump(self, path):
        S, M, K, N = self.g.shape
        with open(path, "wb") as fh:
            fh.write(_DUMP_MAGIC)
            fh.write(struct.pack("<4I", M, N, K, S))
            fh.write(self.g.astype("<c8").tobytes())
            fh.write(self.ghat.astype("<c8").tobytes())

    @classmethod
    def load(cls, path):
        """Read a dump; phases are not stored and come back as NaN."""
        with open(path, "rb") as fh:
            if fh.read(4) != _DUMP_MAGIC:
                raise ValueError("not a channel batch dump")
            M, N, K, S = struct.unpack("<4I", fh.read(16))
            n = S * M * K * N
            payload = np.frombuffer(fh.read(), dtype="<c8")
        if payload.size != 2 * n:
            raise ValueError("truncated channel batch dump")
        shape = (S, M, K, N)
        g = payload[:n].reshape(shape).astype(complex)
        ghat = payload[n:].reshape(shape).astype(complex)
        return cls(np.full((S, M, K), np.nan), g, ghat)


class _Sampler:
    """Precomputed factors for drawing samples from one set of statistics."""

    def __init__(self, stats):
        self.stats = stats
        self.L = covariance_factor(stats.R)                   # (M, K, N, N)
        # sqrt(p_k) R_mk Psi_mk^{-1} = sqrt(p_k) (Psi^{-1} R)^H
        self.E = np.sqrt(stats.p)[None, :, None, None] * herm(stats.PsiInvR)

    def draw(self, rng, S):
        st = self.stats
        M, K, N = st.M, st.K, st.N
        if st.phase_shifts:
            theta = rng.uniform(-np.pi, np.pi, size=(S, M, K))
        else:
            theta = np.zeros((S, M, K))
        nlos = np.einsum("mkij,smkj->smki", self.L, complex_normal(rng, (S, M, K, N)))
        los = st.gbar[None] * np.exp(1j * theta)[..., None]
        g = los + nlos
        # pilot observation minus its conditional mean, per pilot index:
        # sum over co-pilot l of sqrt(p_l) tau_p nlos_ml, plus CN(0, tau_p sigma2 I)
        tau = st.tau_p
        noise = np.sqrt(tau * st.sigma2) * complex_normal(rng, (S, M, tau, N))
        weighted = np.sqrt(st.p)[None, None, :, None] * tau * nlos
        onehot = np.zeros((K, tau))
        onehot[np.arange(K), st.pilots.index] = 1.0
        resid = np.einsum("smln,lt->smtn", weighted, onehot) + noise
        resid_k = resid[:, :, st.pilots.index, :]             # (S, M, K, N)
        ghat = los + np.einsum("mkij,smkj->smki", self.E, resid_k)
        return ChannelBatch(theta, g, ghat)


def draw_sample(stats, rng):
    """One coherence block (estimates follow the phase-aware MMSE estimator)."""
    return _Sampler(stats).draw(rng, 1)[0]


def _chunk_rng(seed, stream, chunk):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream), chunk]))


def _draw_chunks(stats, seed, stream, chunks, count):
    sampler = _Sampler(stats)
    out = []
    for c in chunks:
        n = min(CHUNK, count - c * CHUNK)
        out.append(sampler.draw(_chunk_rng(seed, stream, c), n))
    return ChannelBatch.concat(out)


def batch_samples(stats, count, seed, stream=(), workers=None):
    """Deterministic batch of ``count`` independent coherence blocks.

    ``stream`` is an extra tuple of integers mixed into the seed (drop index,
    design/evaluation tag, ...). Output does not depend on ``workers``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    workers = worker_count() if workers is None else max(1, int(workers))
    n_chunks = -(-count // CHUNK)
    if workers == 1 or n_chunks == 1:
        return _draw_chunks(stats, seed, stream, range(n_chunks), count)
    groups = [list(range(i, n_chunks, workers)) for i in range(workers)]
    groups = [grp for grp in groups if grp]
    with ProcessPoolExecutor(max_workers=len(groups)) as pool:
        parts = list(pool.map(_draw_chunks, [stats] * len(groups), [seed] * len(groups),
                              [stream] * len(groups), groups, [count] * len(groups)))
    # reassemble in chunk order
    by_chunk = {}
    for grp, part in zip(groups, parts):
        offset = 0
        for c in grp:
            n = min(CHUNK, count - c * CHUNK)
            by_chunk[c] = part[offset:offset + n]
            offset += n
    return ChannelBatch.concat(by_chunk[c] for c in range(n_chunks))
