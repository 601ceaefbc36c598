"""Network drops and the channel statistics that are fixed per drop.

Indices are zero-based: APs ``m in range(M)``, UEs ``k in range(K)`` and pilot
indices ``t in range(tau_p)``.
"""

from dataclasses import dataclass, field, fields, asdict, replace
import json
import math
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from .linalg import hermitian_solve, herm

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

PILOT_POLICIES = ("greedy", "round-robin")


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Deployment and radio constants of one cell-free network.

    ``rician_range`` is the link distance (m) up to which a LoS component is
    present; ``math.inf`` gives all-Rician links and ``0`` pure Rayleigh.
    """

    M: int = 20
    N: int = 4
    K: int = 20
    tau_p: int = 1
    tau_c: int = 200
    area_side: float = 1000.0
    height_diff: float = 11.0
    p: float = 0.2
    sigma2: float = dbm_to_watt(-94.0)
    angular_std: float = math.radians(15.0)
    rician_range: float = math.inf
    phase_shifts: bool = True
    seed: int = 0
    pilot_policy: str = "greedy"
    pathloss_intercept_db: float = -30.18
    pathloss_slope_db: float = 26.0

    def __post_init__(self):
        if min(self.M, self.N, self.K) < 1:
            raise ValueError("M, N and K must all be at least 1")
        if not 1 <= self.tau_p <= self.tau_c:
            raise ValueError("need 1 <= tau_p <= tau_c")
        if self.area_side <= 0 or self.p <= 0 or self.sigma2 <= 0:
            raise ValueError("area_side, p and sigma2 must be positive")
        if self.height_diff < 0 or self.angular_std < 0 or self.rician_range < 0:
            raise ValueError("height_diff, angular_std and rician_range must be >= 0")
        if self.pilot_policy not in PILOT_POLICIES:
            raise ValueError(f"unknown pilot policy {self.pilot_policy!r}")

    @property
    def prelog(self):
        return (self.tau_c - self.tau_p) / self.tau_c

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["rician_range"]):
            d["rician_range"] = "infinite"
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)} | {"sigma2_dbm"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if isinstance(data.get("rician_range"), str):
            if data["rician_range"].lower() not in ("inf", "infinite"):
                raise ValueError("rician_range must be a number or 'infinite'")
            data["rician_range"] = math.inf
        if "sigma2_dbm" in data:
            data["sigma2"] = dbm_to_watt(data.pop("sigma2_dbm"))
        return cls(**data)


def load_config_file(path):
    """Read a JSON or TOML key-value file into a plain dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


# ---------------------------------------------------------------------------
# geometry and large-scale fading
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    ap_pos: np.ndarray      # (M, 2)
    ue_pos: np.ndarray      # (K, 2)
    distance: np.ndarray    # (M, K) 3-D distance incl. height difference
    azimuth: np.ndarray     # (M, K) angle of the wrapped AP->UE displacement


def wrapped_displacement(ap_pos, ue_pos, side):
    """Shortest planar displacement on a torus of the given side length."""
    delta = ue_pos[None, :, :] - ap_pos[:, None, :]
    return (delta + side / 2.0) % side - side / 2.0


def place_network(config, rng=None):
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x6E0]))
    ap_pos = rng.uniform(0.0, config.area_side, size=(config.M, 2))
    ue_pos = rng.uniform(0.0, config.area_side, size=(config.K, 2))
    return geometry_from_positions(ap_pos, ue_pos, config.area_side, config.height_diff)


def geometry_from_positions(ap_pos, ue_pos, side, height_diff):
    ap_pos = np.atleast_2d(np.asarray(ap_pos, dtype=float))
    ue_pos = np.atleast_2d(np.asarray(ue_pos, dtype=float))
    delta = wrapped_displacement(ap_pos, ue_pos, side)
    planar = np.hypot(delta[..., 0], delta[..., 1])
    distance = np.sqrt(planar ** 2 + height_diff ** 2)
    azimuth = np.arctan2(delta[..., 1], delta[..., 0])
    return Geometry(ap_pos, ue_pos, distance, azimuth)


def rician_factor(d):
    return 10.0 ** (1.3 - 0.003 * np.asarray(d, dtype=float))


def pathloss(d, intercept_db=-30.18, slope_db=26.0):
    """Linear channel gain ``10^((intercept - slope*log10(d))/10)``."""
    return 10.0 ** ((intercept_db - slope_db * np.log10(np.asarray(d, dtype=float))) / 10.0)


def los_vector(beta_los, angle, N):
    """Half-wavelength ULA response scaled by ``sqrt(beta_los)``."""
    n = np.arange(N)
    return np.sqrt(beta_los) * np.exp(1j * np.pi * n * np.sin(angle))


def local_scattering_R(beta_nlos, angle, angular_std, N):
    """Gaussian local-scattering correlation matrix (small-spread approximation).

    Negative eigenvalues of the approximation are clipped and the trace is
    restored to ``N * beta_nlos``.
    """
    dist = np.arange(N)
    row = np.exp(1j * np.pi * dist * np.sin(angle)) * np.exp(
        -0.5 * angular_std ** 2 * (np.pi * dist * np.cos(angle)) ** 2)
    R = sla.toeplitz(row)  # first column row, first row conj(row)
    lam, U = np.linalg.eigh(R)
    if lam.min() < 0:
        lam = np.clip(lam, 0.0, None)
        R = (U * lam) @ herm(U)
        R *= N / np.trace(R).real
    return beta_nlos * 0.5 * (R + herm(R))


# ---------------------------------------------------------------------------
# pilots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PilotAssignment:
    index: np.ndarray  # (K,) pilot index t_k

    @property
    def K(self):
        return self.index.size

    def copilots(self, k):
        """UEs sharing UE ``k``'s pilot (``k`` included)."""
        return np.flatnonzero(self.index == self.index[k])

    def same_pilot(self):
        """(K, K) boolean mask ``t_k == t_l``."""
        return self.index[:, None] == self.index[None, :]


def assign_pilots(K, tau_p, policy="round-robin", beta=None):
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if policy == "round-robin":
        return PilotAssignment(np.arange(K) % tau_p)
    if policy != "greedy":
        raise ValueError(f"unknown pilot policy {policy!r}")
    if beta is None:
        raise ValueError("greedy pilot assignment needs the (M, K) gain matrix")
    index = np.empty(K, dtype=int)
    first = min(K, tau_p)
    index[:first] = np.arange(first)
    for k in range(first, K):
        master = np.argmax(beta[:, k])
        load = [beta[master, :k][index[:k] == t].sum() for t in range(tau_p)]
        index[k] = int(np.argmin(load))
    return PilotAssignment(index)


# ---------------------------------------------------------------------------
# channel statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairStatistics:
    gbar: np.ndarray
    R: np.ndarray
    beta: float
    beta_los: float
    beta_nlos: float
    kappa: float
    Psi: np.ndarray
    Rhat: np.ndarray
    C: np.ndarray
    has_los: bool


@dataclass(frozen=True)
class Statistics:
    """Per-drop channel statistics for every AP-UE pair.

    Array layout is ``(M, K, ...)``: ``gbar[m, k]`` is the LoS vector without
    phase, ``R[m, k]`` the NLoS correlation, ``Psi[m, k]`` the pilot Gram of
    UE k's pilot at AP m, ``Rhat``/``C`` the estimate and error covariances.
    """

    config: NetworkConfig
    pilots: PilotAssignment
    p: np.ndarray
    beta: np.ndarray
    beta_los: np.ndarray
    beta_nlos: np.ndarray
    kappa: np.ndarray
    has_los: np.ndarray
    gbar: np.ndarray
    R: np.ndarray
    Psi: np.ndarray
    PsiInvR: np.ndarray   # Psi_mk^{-1} R_mk
    Rhat: np.ndarray
    C: np.ndarray
    geometry: Geometry = None

    @property
    def M(self):
        return self.gbar.shape[0]

    @property
    def K(self):
        return self.gbar.shape[1]

    @property
    def N(self):
        return self.gbar.shape[2]

    @property
    def sigma2(self):
        return self.config.sigma2

    @property
    def tau_p(self):
        return self.config.tau_p

    @property
    def phase_shifts(self):
        return self.config.phase_shifts

    @property
    def prelog(self):
        return self.config.prelog

    def with_phase_shifts(self, flag):
        return replace(self, config=self.config.with_(phase_shifts=bool(flag)))

    def pair(self, m, k):
        return PairStatistics(self.gbar[m, k], self.R[m, k], self.beta[m, k],
                              self.beta_los[m, k], self.beta_nlos[m, k],
                              self.kappa[m, k], self.Psi[m, k], self.Rhat[m, k],
                              self.C[m, k], bool(self.has_los[m, k]))

    def cross(self, m, l, k):
        """``R_ml Psi_mk^{-1} R_mk`` (pilot cross-correlation term)."""
        return self.R[m, l] @ self.PsiInvR[m, k]

    def Rbar(self, m, k):
        """``E{ghat ghat^H}`` at AP m: LoS outer product plus estimate covariance."""
        g = self.gbar[m, k]
        return np.outer(g, g.conj()) + self.Rhat[m, k]

    # collective (stacked over APs) forms ----------------------------------
    def collective(self, name, k, aps=None):
        aps = range(self.M) if aps is None else aps
        return sla.block_diag(*[getattr(self, name)[m, k] for m in aps])

    def collective_gbar(self, k, aps=None):
        aps = range(self.M) if aps is None else aps
        return np.concatenate([self.gbar[m, k] for m in aps])

    def to_dict(self):
        def cplx(a):
            return np.stack([a.real, a.imag], axis=-1).tolist()
        out = {
            "config": self.config.to_dict(),
            "pilot_index": self.pilots.index.tolist(),
            "beta": self.beta.tolist(),
            "kappa": self.kappa.tolist(),
            "has_los": self.has_los.tolist(),
            "gbar": cplx(self.gbar),
            "R": cplx(self.R),
        }
        if self.geometry is not None:
            out["ap_pos"] = self.geometry.ap_pos.tolist()
            out["ue_pos"] = self.geometry.ue_pos.tolist()
            out["distance"] = self.geometry.distance.tolist()
        return out


def build_statistics(geometry, pilots, config, *, gbar=None, R=None):
    """Assemble every pair's statistics for one drop.

    ``gbar``/``R`` may be supplied directly (shape ``(M, K, N)`` and
    ``(M, K, N, N)``) to bypass the geometric channel model.
    """
    M, K, N = config.M, config.K, config.N
    p = np.full(K, float(config.p))
    if geometry is not None:
        d = geometry.distance
        beta = pathloss(d, config.pathloss_intercept_db, config.pathloss_slope_db)
        has_los = d <= config.rician_range
        kappa = np.where(has_los, rician_factor(d), 0.0)
    else:
        beta = np.ones((M, K))
        has_los = np.ones((M, K), dtype=bool)
        kappa = np.ones((M, K))
    beta_los = kappa / (kappa + 1.0) * beta
    beta_nlos = beta / (kappa + 1.0)

    if gbar is None:
        gbar = np.empty((M, K, N), dtype=complex)
        for m in range(M):
            for k in range(K):
                gbar[m, k] = los_vector(beta_los[m, k], geometry.azimuth[m, k], N)
    if R is None:
        R = np.empty((M, K, N, N), dtype=complex)
        for m in range(M):
            for k in range(K):
                R[m, k] = local_scattering_R(beta_nlos[m, k], geometry.azimuth[m, k],
                                             config.angular_std, N)
    gbar = np.asarray(gbar, dtype=complex)
    R = np.asarray(R, dtype=complex)

    eye = np.eye(N)
    Psi = np.empty((M, K, N, N), dtype=complex)
    PsiInvR = np.empty_like(Psi)
    Rhat = np.empty_like(Psi)
    for m in range(M):
        for t in np.unique(pilots.index):
            users = np.flatnonzero(pilots.index == t)
            G = sum(p[l] * config.tau_p * R[m, l] for l in users) + config.sigma2 * eye
            G = 0.5 * (G + herm(G))
            for k in users:
                Psi[m, k] = G
                PsiInvR[m, k] = hermitian_solve(G, R[m, k], eps=0.0)
                Rhat[m, k] = p[k] * config.tau_p * R[m, k] @ PsiInvR[m, k]
                Rhat[m, k] = 0.5 * (Rhat[m, k] + herm(Rhat[m, k]))
    C = R - Rhat
    return Statistics(config, pilots, p, beta, beta_los, beta_nlos, kappa, has_los,
                      gbar, R, Psi, PsiInvR, Rhat, C, geometry)


def make_drop(config, drop=0):
    """Draw geometry, assign pilots and build statistics for drop number ``drop``."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x6E0, drop]))
    geometry = place_network(config, rng)
    beta = pathloss(geometry.distance, config.pathloss_intercept_db, config.pathloss_slope_db)
    pilots = assign_pilots(config.K, config.tau_p, config.pilot_policy, beta)
    return build_statistics(geometry, pilots, config)
