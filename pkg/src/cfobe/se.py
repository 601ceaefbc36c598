"""Spectral-efficiency evaluation: UatF and standard bounds, closed form and Monte Carlo.

Monte-Carlo error bars use batch means: the batch is split into
``SUB_BATCHES`` contiguous parts, the same estimator (with the combiner and
any weights held fixed) is evaluated on every part, and the standard error is
the sample standard deviation of those values over ``sqrt(SUB_BATCHES)``.
"""

from dataclasses import dataclass, field
import csv
import io
import json

import numpy as np
from scipy import linalg as sla

from .combining.base import error_noise_cov
from .combining.lsfd import lsfd_sinr, lsfd_weights
from .combining.terms import CollectiveView, centralized_gamma
from .linalg import vec

SUB_BATCHES = 10
BOUNDS = ("UatF-centralized", "UatF-LSFD", "UatF-EWDP", "UatF-local",
          "standard-centralized", "standard-local")
CSV_COLUMNS = ("ue", "scheme", "bound", "method", "sinr", "se", "stderr", "samples")


def se_from_sinr(sinr, prelog):
    return prelog * np.log2(1.0 + np.asarray(sinr, dtype=float))


def sinr_from_se(se, prelog):
    return np.exp2(np.asarray(se, dtype=float) / prelog) - 1.0


@dataclass
class SEReport:
    """Per-UE SINR/SE of one scheme under one bound.

    ``stderr`` is the Monte-Carlo standard error of ``sinr``; ``se_stderr``
    that of ``se``. ``sub_se`` keeps the per-sub-batch SE values so that
    paired differences between schemes evaluated on the same batch can be
    given error bars. ``labels`` name the entries (UE index, or ``k@m`` for
    per-AP local bounds).
    """

    scheme: str
    bound: str
    method: str
    sinr: np.ndarray
    se: np.ndarray
    prelog: float
    stderr: np.ndarray = None
    se_stderr: np.ndarray = None
    samples: int = 0
    sub_se: np.ndarray = None
    sub_sinr: np.ndarray = None
    labels: list = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound not in BOUNDS:
            raise ValueError(f"unknown bound {self.bound!r}")
        if self.method not in ("mc", "closed"):
            raise ValueError(f"unknown method {self.method!r}")
        self.sinr = np.maximum(np.asarray(self.sinr, dtype=float), 0.0)
        self.se = np.asarray(self.se, dtype=float)
        if self.labels is None:
            self.labels = [str(i) for i in range(self.sinr.size)]

    @property
    def mean_se(self):
        return float(np.mean(self.se))

    def rows(self):
        for i, lab in enumerate(self.labels):
            yield {
                "ue": lab, "scheme": self.scheme, "bound": self.bound, "method": self.method,
                "sinr": repr(float(self.sinr[i])), "se": repr(float(self.se[i])),
                "stderr": "" if self.se_stderr is None else repr(float(self.se_stderr[i])),
                "samples": self.samples,
            }

    def to_json(self):
        return json.dumps({
            "scheme": self.scheme, "bound": self.bound, "method": self.method,
            "prelog": self.prelog, "samples": self.samples, "labels": self.labels,
            "sinr": self.sinr.tolist(), "se": self.se.tolist(),
            "sinr_stderr": None if self.stderr is None else self.stderr.tolist(),
            "se_stderr": None if self.se_stderr is None else self.se_stderr.tolist(),
        })


def reports_to_csv(reports, extra=None):
    """Render reports as CSV text; ``extra`` adds leading constant columns."""
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(extra) + list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        for row in rep.rows():
            writer.writerow({**extra, **row})
    return buf.getvalue()


def sub_batches(S, parts=SUB_BATCHES):
    return np.array_split(np.arange(S), parts)


def batch_stderr(values):
    """Standard error from per-sub-batch values along the last axis."""
    values = np.asarray(values, dtype=float)
    return np.std(values, axis=-1, ddof=1) / np.sqrt(values.shape[-1])


def _mc_report(scheme, bound, sinr, sub_sinr, prelog, samples, labels=None, se=None, sub_se=None):
    if se is None:
        se = se_from_sinr(sinr, prelog)
        sub_se = se_from_sinr(sub_sinr, prelog)
    return SEReport(scheme, bound, "mc", sinr, se, prelog,
                    stderr=batch_stderr(sub_sinr), se_stderr=batch_stderr(sub_se),
                    samples=samples, sub_se=sub_se, sub_sinr=sub_sinr, labels=labels)


def _closed_report(scheme, bound, sinr, prelog, labels=None):
    sinr = np.maximum(np.asarray(sinr, dtype=float), 0.0)
    return SEReport(scheme, bound, "closed", sinr, se_from_sinr(sinr, prelog), prelog,
                    labels=labels)


# ---------------------------------------------------------------------------
# centralized UatF
# ---------------------------------------------------------------------------

@dataclass
class MomentSet:
    """Sample moments behind a UatF SINR, with batch-means standard errors."""

    gain: np.ndarray = None          # E{v_k^H g_k}                     (K,)
    cross: np.ndarray = None         # E{|v_k^H g_l|^2}                 (K, K)
    norm: np.ndarray = None          # E{||v_k||^2}                     (K,)
    b: np.ndarray = None             # E{b_kk}                          (K, M)
    Xi: np.ndarray = None            # E{b_kl b_kl^H}                   (K, K, M, M)
    D: np.ndarray = None             # E{||v_mk||^2}                    (K, M)
    stderr: dict = field(default_factory=dict)


def _uatf_sinr(gain, cross, norm, p, sigma2):
    num = p * np.abs(gain) ** 2
    den = cross @ p - num + sigma2 * norm
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def centralized_moments(v, batch):
    """Per-sample ``v_k^H g_l`` (S, K, K) and ``||v_k||^2`` (S, K)."""
    G = batch.collective("g")
    P = np.einsum("skd,sld->skl", v.conj(), G)
    nrm = np.einsum("skd,skd->sk", v.conj(), v).real
    return P, nrm


def uatf_centralized_mc(combiner, batch, stats, scheme=None, bound="UatF-centralized"):
    """Sample-moment UatF SINR for a centralized (or stacked local) combiner."""
    v = combiner.centralized_v()
    P, nrm = centralized_moments(v, batch)
    p, s2 = stats.p, stats.sigma2
    K = P.shape[1]
    diag = np.arange(K)

    def sinr_of(idx):
        Ps = P[idx]
        return _uatf_sinr(Ps[:, diag, diag].mean(0), (np.abs(Ps) ** 2).mean(0),
                          nrm[idx].mean(0), p, s2)

    full = sinr_of(slice(None))
    subs = np.stack([sinr_of(i) for i in sub_batches(batch.count)], axis=-1)
    rep = _mc_report(scheme or combiner.scheme, bound, full, subs, stats.prelog, batch.count)
    rep.flags["moments"] = MomentSet(gain=P[:, diag, diag].mean(0),
                                     cross=(np.abs(P) ** 2).mean(0), norm=nrm.mean(0))
    return rep


def _tr(A, B):
    """``tr(A B)`` without forming the product."""
    return np.einsum("ij,ji->", A, B)


def uatf_trace_terms(W, view, k):
    """Numerator and denominator pieces of the closed-form centralized UatF SINR.

    ``W`` is the (D, D) BE matrix of UE ``k`` on the APs of ``view``.
    Returns a dict with the signal term, ``mu_kl`` (K,), ``eps_kl`` (K,) and
    ``omega_k``.
    """
    p, tau = view.p, view.tau_p
    K = view.K
    Wh = W.conj().T
    Gkk = view.G(k, k)
    Rhat = view.Rhat(k)
    Rbar = view.Rbar(k)
    signal = abs(_tr(Wh, Rbar)) ** 2
    mu = np.zeros(K)
    eps = np.zeros(K)
    for l in range(K):
        Gll, Rl = view.G(l, l), view.R(l)
        mu[l] = (_tr(Wh @ Gll, W @ Gkk) + _tr(Wh @ Rl, W @ Gkk)
                 + _tr(Wh @ Gll, W @ Rhat) + _tr(Wh @ Rl, W @ Rhat)).real
        if view.same_pilot[k, l]:
            t = _tr(Wh, view.T(l, k))
            eps[l] = p[k] * p[l] * tau ** 2 * abs(t) ** 2
            if not view.phase:
                # phase-compensated LoS: co-pilot LoS/estimate cross terms
                s = np.sqrt(p[k] * p[l]) * tau
                eps[l] += (s * _tr(Wh, view.G(l, k)) * _tr(W, view.T(k, l))
                           + s * _tr(W, view.G(k, l)) * t).real
    omega = _omega(W, view, k) if view.phase else 0.0
    noise = _tr(W @ Rbar, Wh).real
    return dict(signal=signal, mu=mu, eps=eps, omega=omega, noise=noise)


def _omega(W, view, k):
    """LoS fourth-moment correction of the random-phase model for UE ``k``."""
    p, tau, N = view.p, view.tau_p, view.N
    Wh = W.conj().T
    Gkk = view.G(k, k)
    Tkk = view.T(k, k)
    g = [view.gbar[k][i * N:(i + 1) * N] for i in range(len(view.aps))]
    Mv = len(g)
    blk = lambda A, i, j: A[i * N:(i + 1) * N, j * N:(j + 1) * N]
    out = (p[k] * tau * _tr(Wh, Tkk) * _tr(W, Gkk) + p[k] * tau * _tr(Wh, Gkk) * _tr(W, Tkk)
           - _tr(Wh @ Gkk, W @ Gkk))
    for m1 in range(Mv):
        G1 = np.outer(g[m1], g[m1].conj())
        for m2 in range(Mv):
            if m1 == m2:
                continue
            G12 = np.outer(g[m1], g[m2].conj())
            G2 = np.outer(g[m2], g[m2].conj())
            out += _tr(blk(W, m1, m1).conj().T @ G12, blk(W, m2, m2) @ G12.conj().T)
            out += _tr(blk(W, m2, m1).conj().T @ G2, blk(W, m2, m1) @ G1)
        out += _tr(blk(W, m1, m1).conj().T @ G1, blk(W, m1, m1) @ G1)
    return float(out.real)


def _trace_sinr(W, view, k):
    t = uatf_trace_terms(W, view, k)
    p = view.p
    den = (t["mu"] @ p + t["eps"] @ p + p[k] * t["omega"] - p[k] * t["signal"]
           + view.sigma2 * t["noise"])
    return p[k] * t["signal"] / den if den > 0 else 0.0


def uatf_centralized_closed(W, stats, scheme="BE"):
    """Closed-form centralized UatF SINR for statistics-based ``W`` (K, MN, MN)."""
    W = W.to_centralized() if hasattr(W, "to_centralized") else W
    vals = np.asarray(getattr(W, "values", W))
    view = CollectiveView(stats)
    sinr = [_trace_sinr(vals[k], view, k) for k in range(stats.K)]
    return _closed_report(scheme, "UatF-centralized", sinr, stats.prelog)


def uatf_centralized_quadform(W, stats):
    """Same SINR through the vectorised quadratic form ``|w^H r|^2 / w^H Gamma w``."""
    vals = np.asarray(getattr(W, "values", W))
    view = CollectiveView(stats)
    return np.array([centralized_gamma(view, k).sinr(vec(vals[k])) for k in range(stats.K)])


# ---------------------------------------------------------------------------
# distributed: LSFD / equal weights
# ---------------------------------------------------------------------------

def local_moments(combiner, batch):
    """Per-sample ``v_mk^H g_ml`` (S, M, K, K) and ``||v_mk||^2`` (S, M, K)."""
    v = combiner.v
    Bm = np.einsum("smkn,smln->smkl", v.conj(), batch.g)
    nrm = np.einsum("smkn,smkn->smk", v.conj(), v).real
    return Bm, nrm


def _lsfd_moments(Bm, nrm):
    K = Bm.shape[2]
    diag = np.arange(K)
    b = Bm[:, :, diag, diag].mean(0).T                         # (K, M)
    Xi = np.einsum("smkl,snkl->klmn", Bm, Bm.conj()) / Bm.shape[0]
    D = nrm.mean(0).T                                          # (K, M)
    return b, Xi, D


def lsfd_mc(combiner, batch, stats, policy="optimal", a=None, scheme=None):
    """LSFD SINR from sample moments.

    ``policy`` is ``"optimal"`` (weights from the full-batch moments, then
    held fixed for the sub-batch error bars), ``"equal"`` or ``"supplied"``
    (``a`` of shape (K, M)). Returns ``(MomentSet, SEReport)``.
    """
    if combiner.scope != "local":
        raise ValueError("LSFD needs local (per-AP) combiners")
    Bm, nrm = local_moments(combiner, batch)
    p, s2 = stats.p, stats.sigma2
    K, M = stats.K, stats.M
    b, Xi, D = _lsfd_moments(Bm, nrm)
    if policy == "optimal":
        A = np.array([lsfd_weights(Xi[k], b[k], D[k], p, k, s2)[0] for k in range(K)])
    elif policy == "equal":
        A = np.ones((K, M), dtype=complex)
    elif policy == "supplied":
        A = np.asarray(a, dtype=complex)
    else:
        raise ValueError(f"unknown LSFD policy {policy!r}")
    full = np.array([lsfd_sinr(A[k], Xi[k], b[k], D[k], p, k, s2) for k in range(K)])
    subs = []
    for idx in sub_batches(batch.count):
        bs, Xs, Ds = _lsfd_moments(Bm[idx], nrm[idx])
        subs.append([lsfd_sinr(A[k], Xs[k], bs[k], Ds[k], p, k, s2) for k in range(K)])
    subs = np.array(subs).T
    bound = "UatF-EWDP" if policy == "equal" else "UatF-LSFD"
    rep = _mc_report(scheme or combiner.scheme, bound, full, subs, stats.prelog, batch.count)
    rep.flags["weights"] = A
    return MomentSet(b=b, Xi=Xi, D=D), rep


def lsfd_closed_moments(W, stats):
    """Closed-form ``E{b_kk}``, ``Xi_kl`` and ``D_k`` for local BE matrices (M, K, N, N)."""
    vals = np.asarray(getattr(W, "values", W))
    M, K = stats.M, stats.K
    p, tau = stats.p, stats.tau_p
    same = stats.pilots.same_pilot()
    views = [CollectiveView(stats, [m]) for m in range(M)]
    b = np.zeros((K, M), dtype=complex)
    D = np.zeros((K, M))
    Xi = np.zeros((K, K, M, M), dtype=complex)
    for k in range(K):
        gamma = np.zeros((K, M), dtype=complex)
        for m, v in enumerate(views):
            Wm = vals[m, k]
            Wh = Wm.conj().T
            Rbar = v.Rbar(k)
            b[k, m] = _tr(Wh, Rbar)
            D[k, m] = _tr(Wm @ Rbar, Wh).real
            Gkk, Rhat = v.G(k, k), v.Rhat(k)
            for l in range(K):
                Gll, Rl = v.G(l, l), v.R(l)
                phi = (_tr(Wh @ Gll, Wm @ Gkk) + _tr(Wh @ Rl, Wm @ Gkk)
                       + _tr(Wh @ Gll, Wm @ Rhat) + _tr(Wh @ Rl, Wm @ Rhat))
                ups = 0.0
                if same[k, l]:
                    t = _tr(Wh, v.T(l, k))
                    ups = p[k] * p[l] * tau ** 2 * abs(t) ** 2
                    if l == k and stats.phase_shifts:
                        Tkk = v.T(k, k)
                        ups += (p[k] * tau * _tr(Wh, Gkk) * _tr(Wm, Tkk)
                                + p[k] * tau * _tr(Wh, Tkk) * _tr(Wm, Gkk))
                    elif not stats.phase_shifts:
                        s = np.sqrt(p[k] * p[l]) * tau
                        ups += (s * _tr(Wh, v.G(l, k)) * _tr(Wm, v.T(k, l))
                                + s * _tr(Wm, v.G(k, l)) * t)
                Xi[k, l, m, m] = (phi + ups).real
                gamma[l, m] = _tr(Wh, v.B(l, k))
        for l in range(K):
            if stats.phase_shifts and not same[k, l]:
                continue        # independent zero-mean phases: no cross-AP coupling
            outer = np.outer(gamma[l], gamma[l].conj())
            off = ~np.eye(M, dtype=bool)
            Xi[k, l][off] = outer[off]
    return b, Xi, D


def lsfd_closed(W, stats, scheme="BE"):
    """Closed-form LSFD evaluation; returns ``(equal_weight_report, optimal_report)``."""
    b, Xi, D = lsfd_closed_moments(W, stats)
    p, s2, K = stats.p, stats.sigma2, stats.K
    eq = [lsfd_sinr(np.ones(stats.M), Xi[k], b[k], D[k], p, k, s2) for k in range(K)]
    opt, weights = [], []
    for k in range(K):
        a, s = lsfd_weights(Xi[k], b[k], D[k], p, k, s2)
        opt.append(s)
        weights.append(a)
    r_eq = _closed_report(scheme, "UatF-EWDP", eq, stats.prelog)
    r_opt = _closed_report(scheme, "UatF-LSFD", opt, stats.prelog)
    r_opt.flags["weights"] = np.array(weights)
    return r_eq, r_opt


def ewdp_sinr(W, stats, batch=None, scheme="BE"):
    """Equal-weight distributed SINR, closed form or (with ``batch``) Monte Carlo."""
    if batch is None:
        return lsfd_closed(W, stats, scheme)[0]
    from .combining.base import be_combine
    comb = W if hasattr(W, "v") else be_combine(W, batch, scheme)
    return uatf_centralized_mc(comb, batch, stats, scheme=scheme, bound="UatF-EWDP")


# ---------------------------------------------------------------------------
# per-AP UatF and standard bounds
# ---------------------------------------------------------------------------

def local_uatf(W_or_combiner, stats, batch=None, m=None, k=None, scheme="BE"):
    """Per-AP UatF SINR of ``v_mk``; closed form from local statistics or MC.

    Returns a report whose entries are labelled ``k@m``.
    """
    M, K = stats.M, stats.K
    aps = range(M) if m is None else [m]
    ues = range(K) if k is None else [k]
    labels = [f"{kk}@{mm}" for mm in aps for kk in ues]
    if batch is None:
        vals = np.asarray(getattr(W_or_combiner, "values", W_or_combiner))
        sinr = []
        for mm in aps:
            view = CollectiveView(stats, [mm])
            sinr += [_trace_sinr(vals[mm, kk], view, kk) for kk in ues]
        return _closed_report(scheme, "UatF-local", sinr, stats.prelog, labels)
    comb = W_or_combiner
    if not hasattr(comb, "v"):
        from .combining.base import be_combine
        comb = be_combine(comb, batch, scheme)
    Bm, nrm = local_moments(comb, batch)
    p, s2 = stats.p, stats.sigma2
    diag = np.arange(K)

    def sinr_of(idx):
        Bs = Bm[idx]
        out = _uatf_sinr(Bs[:, :, diag, diag].mean(0), (np.abs(Bs) ** 2).mean(0),
                         nrm[idx].mean(0), p, s2)       # (M, K)
        return np.array([out[mm, kk] for mm in aps for kk in ues])

    full = sinr_of(slice(None))
    subs = np.stack([sinr_of(i) for i in sub_batches(batch.count)], axis=-1)
    return _mc_report(scheme if comb.scheme is None else comb.scheme, "UatF-local",
                      full, subs, stats.prelog, batch.count, labels)


def _standard_per_sample(v, H, Z, p):
    """Instantaneous SINR with estimation error plus noise ``Z`` (S, K)."""
    Q = np.abs(np.einsum("...kd,...ld->...kl", v.conj(), H)) ** 2
    K = Q.shape[-1]
    diag = np.arange(K)
    sig = p * Q[..., diag, diag]
    interf = Q @ p - sig
    noise = np.einsum("...kd,de,...ke->...k", v.conj(), Z, v).real if Z.ndim == 2 else \
        np.einsum("...kd,...de,...ke->...k", v.conj(), Z, v).real
    den = interf + noise
    return np.where(den > 0, sig / np.where(den > 0, den, 1.0), 0.0)


def standard_bound(combiner, batch, stats, scope="centralized", scheme=None):
    """Standard capacity bound: prelog times the mean of log2(1 + instantaneous SINR).

    The interference-plus-noise term is ``sum_{l != k} p_l |v^H ghat_l|^2 +
    v^H (sum_l p_l C_l + sigma2 I) v``. Per-AP entries are labelled ``k@m``
    for the local scope.
    """
    p, prelog = stats.p, stats.prelog
    if scope == "centralized":
        v = combiner.centralized_v()
        Z = sla.block_diag(*error_noise_cov(stats))
        inst = _standard_per_sample(v, batch.collective("ghat"), Z, p)      # (S, K)
        labels = None
    elif scope == "local":
        if combiner.scope != "local":
            raise ValueError("local standard bound needs per-AP combiners")
        Zm = error_noise_cov(stats)                                        # (M, N, N)
        v = np.swapaxes(combiner.v, 0, 1)                                   # (M, S, K, N)
        H = np.swapaxes(batch.ghat, 0, 1)
        inst = np.stack([_standard_per_sample(v[m], H[m], Zm[m], p) for m in range(stats.M)])
        inst = np.moveaxis(inst, 0, 1).reshape(batch.count, -1)            # (S, M*K)
        labels = [f"{k}@{m}" for m in range(stats.M) for k in range(stats.K)]
    else:
        raise ValueError(f"unknown scope {scope!r}")
    rates = np.log2(1.0 + inst)
    se = prelog * rates.mean(0)
    sub_se = np.stack([prelog * rates[i].mean(0) for i in sub_batches(batch.count)], axis=-1)
    return _mc_report(scheme or combiner.scheme, f"standard-{scope}",
                      sinr_from_se(se, prelog), sinr_from_se(sub_se, prelog), prelog,
                      batch.count, labels, se=se, sub_se=sub_se)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def aggregate(reports):
    """Average SE, sum SE (per drop, averaged) and the empirical CDF of per-UE SE.

    ``reports`` is a sequence of reports, typically one per drop, for one
    scheme/bound. When all reports carry sub-batch values, ``avg_se_stderr``
    is the batch-means error of the average SE.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    values = np.concatenate([r.se for r in reports])
    cdf_x = np.sort(values, kind="stable")
    cdf_y = np.arange(1, values.size + 1) / values.size
    out = {
        "avg_se": float(values.mean()),
        "sum_se": float(np.mean([r.se.sum() for r in reports])),
        "cdf_x": cdf_x,
        "cdf_y": cdf_y,
        "count": int(values.size),
    }
    if all(r.sub_se is not None for r in reports):
        sub = average_sub_se(reports)
        out["avg_se_sub"] = sub
        out["avg_se_stderr"] = float(batch_stderr(sub))
    return out


def average_sub_se(reports):
    """Per-sub-batch average SE across all entries of all reports."""
    subs = np.concatenate([r.sub_se for r in reports], axis=0)     # (entries, B)
    return subs.mean(0)


def paired_gap(reports_a, reports_b):
    """Average-SE difference a - b and its batch-means error (same batches)."""
    da = average_sub_se(reports_a)
    db = average_sub_se(reports_b)
    gap = aggregate(reports_a)["avg_se"] - aggregate(reports_b)["avg_se"]
    return gap, float(batch_stderr(da - db))
