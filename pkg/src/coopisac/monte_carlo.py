"""Monte Carlo oracles for the closed forms.

Trials are processed in fixed-size blocks. Block ``b`` of a simulator tagged
``tag`` draws from ``SeedSequence(master_seed, spawn_key=(tag, b))``, and the
per-block moments are merged in block order, so estimates are bit-identical
for any number of worker threads.
"""
from __future__ import annotations

import csv
import math
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .communication import CommParams, kappa_c
from .errors import DomainError, IllConditioned
from .network_geometry import PppWindow, default_window, sample_ordered_distances
from .sensing import SensingParams, build_fim_batch, crlb_batch, kappa_s, zeta_sq
from .special_math import gamma_half_ratio_sq

ChannelMode = Literal["gamma_surrogate", "true_zf"]
COND_LIMIT = 1e12


@dataclass(frozen=True)
class McConfig:
    """Trial budget and RNG root for one simulation."""

    trials: int
    master_seed: int = 0
    window: Optional[PppWindow] = None
    channel_mode: ChannelMode = "gamma_surrogate"
    block_size: int = 2048
    workers: int = 1
    dump_path: Optional[str] = None

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.block_size < 1 or self.workers < 1:
            raise DomainError("block_size and workers must be >= 1")
        if self.channel_mode not in ("gamma_surrogate", "true_zf"):
            raise DomainError(f"unknown channel mode {self.channel_mode!r}")

    def point_count(self, lambda_b: float, order: int = 0) -> int:
        """Number of nearest BSs simulated per trial."""
        w = self.window if self.window is not None else default_window(lambda_b, order)
        return max(order + 1, int(math.ceil(w.expected_count)))


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error; ``excluded`` counts discarded trials."""

    mean: float
    std_error: float
    trials: int
    excluded: int = 0

    @property
    def exclusion_rate(self) -> float:
        total = self.trials + self.excluded
        return self.excluded / total if total else 0.0

    def sigma_distance(self, reference: float) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.mean == reference else math.inf
        return abs(self.mean - reference) / self.std_error


def stream_tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def block_rng(master_seed: int, tag: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(tag, block)))


@dataclass
class _Moments:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    excluded: int = 0
    samples: list = field(default_factory=list)

    def merge(self, other: "_Moments") -> None:
        # Chan et al. pairwise update
        if other.n:
            n = self.n + other.n
            delta = other.mean - self.mean
            self.mean += delta * other.n / n
            self.m2 += other.m2 + delta * delta * self.n * other.n / n
            self.n = n
        self.excluded += other.excluded
        self.samples.extend(other.samples)


def _block_moments(values: np.ndarray, keep: bool) -> _Moments:
    ok = np.isfinite(values)
    v = values[ok]
    m = _Moments(excluded=int((~ok).sum()))
    if v.size:
        m.n = int(v.size)
        m.mean = float(v.mean())
        m.m2 = float(((v - m.mean) ** 2).sum())
    if keep:
        m.samples.append(values)
    return m


def run_blocks(
    mc: McConfig, name: str, draw: Callable[[np.random.Generator, int], np.ndarray]
) -> McEstimate:
    """Evaluate ``draw(rng, n)`` over blocks and reduce to an McEstimate.

    ``draw`` returns one value per trial; non-finite values are excluded.
    """
    tag = stream_tag(name)
    nblocks = -(-mc.trials // mc.block_size)
    keep = mc.dump_path is not None

    def one(b: int) -> _Moments:
        n = min(mc.block_size, mc.trials - b * mc.block_size)
        return _block_moments(np.asarray(draw(block_rng(mc.master_seed, tag, b), n), dtype=float), keep)

    if mc.workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            parts = list(pool.map(one, range(nblocks)))
    else:
        parts = [one(b) for b in range(nblocks)]
    total = _Moments()
    for p in parts:
        total.merge(p)
    if keep:
        _dump(mc.dump_path, np.concatenate(total.samples) if total.samples else np.empty(0))
    if total.n == 0:
        return McEstimate(math.nan, math.nan, 0, total.excluded)
    se = math.sqrt(total.m2 / (total.n - 1)) / math.sqrt(total.n) if total.n > 1 else 0.0
    return McEstimate(total.mean, se, total.n, total.excluded)


def _dump(path: str, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "value"])
        for i, v in enumerate(values.tolist()):
            w.writerow([i, repr(v)])


# ---------------------------------------------------------------- ZF channels

def _steering(theta: np.ndarray, m: int) -> np.ndarray:
    return np.exp(1j * math.pi * np.arange(m) * np.cos(theta)[..., None])


def _cgauss(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _zf_precoders(h: np.ndarray, a: np.ndarray):
    """Normalised ZF columns for G = [h, a] and the condition number of G^H G."""
    m = h.shape[-1]
    hh = np.einsum("...m,...m->...", h.conj(), h).real
    ha = np.einsum("...m,...m->...", h.conj(), a)
    det = hh * m - np.abs(ha) ** 2
    tr = hh + m
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    lo = tr - disc
    cond = np.where(lo > 0, (tr + disc) / np.where(lo > 0, lo, 1.0), np.inf)
    # G (G^H G)^-1, scaled by det (the scale drops out on normalisation)
    wc = m * h - ha.conj()[..., None] * a
    ws = -ha[..., None] * h + hh[..., None] * a
    wc = wc / np.linalg.norm(wc, axis=-1, keepdims=True)
    ws = ws / np.linalg.norm(ws, axis=-1, keepdims=True)
    return wc, ws, cond


def _zf_draw(rng: np.random.Generator, shape, m_t: int):
    """Serving-user channel, precoders and redraw count for ``shape`` BSs."""
    n = int(np.prod(shape)) if shape else 1
    h = _cgauss(rng, (n, m_t))
    a = _steering(rng.uniform(0.0, 2.0 * math.pi, n), m_t)
    wc, ws, cond = _zf_precoders(h, a)
    redraws = 0
    bad = cond > COND_LIMIT
    while np.any(bad):
        k = int(bad.sum())
        redraws += k
        if redraws > 1000 + n // 10:
            raise IllConditioned("ZF channel Gram matrix repeatedly ill-conditioned")
        h[bad] = _cgauss(rng, (k, m_t))
        a[bad] = _steering(rng.uniform(0.0, 2.0 * math.pi, k), m_t)
        wc[bad], ws[bad], cond[bad] = _zf_precoders(h[bad], a[bad])
        bad = cond > COND_LIMIT
    return h, wc, ws, redraws


def _zf_gains(rng, shape, m_t: int, p_c: float, p_s: float):
    h, wc, ws, redraws = _zf_draw(rng, shape, m_t)
    sig = p_c * np.abs(np.einsum("nm,nm->n", h.conj(), wc)) ** 2
    hp = _cgauss(rng, h.shape)
    itf = (p_c * np.abs(np.einsum("nm,nm->n", hp.conj(), wc)) ** 2
           + p_s * np.abs(np.einsum("nm,nm->n", hp.conj(), ws)) ** 2)
    return sig.reshape(shape), itf.reshape(shape), redraws


@dataclass(frozen=True)
class GainSamples:
    signal: np.ndarray
    interference: np.ndarray
    redraws: int


def simulate_effective_gains(m_t: int, p_c: float, p_s: float, trials: int, seed: int) -> GainSamples:
    """Effective gains under ZF toward one user and one target direction.

    Signal: p_c |h^H w_c|^2 for the served user. Interference: the gain seen
    by an independent user, p_c |h'^H w_c|^2 + p_s |h'^H w_s|^2.
    """
    if m_t < 2:
        raise DomainError(f"m_t must be >= 2, got {m_t}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream_tag("gains"),)))
    sig, itf, redraws = _zf_gains(rng, (trials,), m_t, p_c, p_s)
    return GainSamples(sig, itf, redraws)


# ------------------------------------------------------------------- rate

def _tail_mean(lambda_b: float, alpha: float, radius: np.ndarray, power: float) -> np.ndarray:
    """Mean interference from a PPP beyond ``radius``."""
    return power * 2.0 * math.pi * lambda_b * radius ** (2.0 - alpha) / (alpha - 2.0)


def simulate_rate(
    L: int,
    params: CommParams,
    mc: McConfig,
    acceptance: Literal["bernoulli", "load"] = "bernoulli",
    tail_correction: bool = True,
    kappa: float | None = None,
) -> McEstimate:
    """Mean log(1 + SIR) of the typical user served by its L nearest BSs.

    Cluster members 2..L join independently; ``bernoulli`` uses the
    acceptance probability directly while ``load`` draws each member's
    Poisson request count and applies the random-selection rule. Members that
    decline act as interferers.
    """
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    K = mc.point_count(params.lambda_b, L)
    k = 1.0 if L == 1 else (kappa_c(L, params.mu_c, params.psi) if kappa is None else kappa)
    load_mean = params.mu_c * gamma_half_ratio_sq(L)
    M, pc, P, a = params.m_t, params.p_c, params.p_t, params.alpha

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        d = sample_ordered_distances(rng, n, K, params.lambda_b)
        acc = np.zeros((n, K), dtype=bool)
        acc[:, 0] = True
        if L > 1:
            if acceptance == "bernoulli":
                acc[:, 1:L] = rng.random((n, L - 1)) < k
            elif acceptance == "load":
                others = rng.poisson(load_mean, (n, L - 1))
                p = np.minimum(1.0, (params.psi - 1) / np.maximum(others - 1, 1))
                acc[:, 1:L] = rng.random((n, L - 1)) < p
            else:
                raise DomainError(f"unknown acceptance mode {acceptance!r}")
        if mc.channel_mode == "gamma_surrogate":
            gs = rng.gamma(M - 1, pc, (n, K))
            gi = rng.exponential(P, (n, K))
        else:
            gs, gi, _ = _zf_gains(rng, (n, K), M, pc, P - pc)
        pl = d ** (-a)
        S = (np.where(acc, gs, 0.0) * pl).sum(axis=1)
        I = (np.where(acc, 0.0, gi) * pl).sum(axis=1)
        if tail_correction:
            I = I + _tail_mean(params.lambda_b, a, d[:, -1], P)
        return np.log1p(S / I)

    return run_blocks(mc, f"rate/{mc.channel_mode}/{acceptance}", draw)


# ------------------------------------------------------------------- sensing

@dataclass(frozen=True)
class SensingAcceptance:
    """Load cap applied to sensing requests; ``refill`` draws in farther BSs to replace decliners."""

    mu_s: float
    psi: int
    refill: bool = True


def simulate_crlb(
    N: int,
    sensing: SensingParams,
    lambda_b: float,
    mc: McConfig,
    acceptance: Optional[SensingAcceptance] = None,
    swerling: bool = False,
    fixed_angles: Optional[Sequence[float]] = None,
    equal_distance: Optional[float] = None,
    zeta_sq_value: Optional[float] = None,
    length_unit_m: float = 1000.0,
) -> McEstimate:
    """Mean tr(F^-1) over PPP deployments using the N nearest BSs.

    Distances are in km unless ``length_unit_m`` says otherwise. Singular
    geometries are excluded and counted; an exclusion rate above 1% emits a
    warning. ``swerling`` draws an independent exponential RCS per bistatic
    pair instead of using its mean.
    """
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    zs = zeta_sq(sensing, length_unit_m) if zeta_sq_value is None else zeta_sq_value
    beta = sensing.beta
    fixed = None if fixed_angles is None else np.asarray(fixed_angles, dtype=float)
    if fixed is not None and fixed.shape != (N,):
        raise DomainError("fixed_angles must hold N angles")
    if acceptance is not None:
        k = kappa_s(N, acceptance.mu_s, acceptance.psi)
        pool = N + int(math.ceil(4.0 * N / max(k, 1e-3))) + 20 if acceptance.refill else N
    else:
        k, pool = 1.0, N

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        d = sample_ordered_distances(rng, n, pool, lambda_b)
        th = rng.uniform(0.0, 2.0 * math.pi, (n, pool))
        if acceptance is not None:
            acc = rng.random((n, pool)) < k
            if acceptance.refill:
                # first N accepting BSs in range order
                rank = np.cumsum(acc, axis=1)
                use = acc & (rank <= N)
            else:
                use = acc
        else:
            use = np.ones((n, pool), dtype=bool)
        if fixed is not None:
            th[:, :N] = fixed
        if equal_distance is not None:
            d = np.full_like(d, equal_distance)
        w = np.where(use, d ** (-beta), 0.0)
        if swerling:
            return _swerling_crlb(rng, w, th, zs * 1.0, sensing.sigma_av)
        c, s = np.cos(th), np.sin(th)
        W = w.sum(axis=1)
        wc, ws = (w * c).sum(axis=1), (w * s).sum(axis=1)
        f11 = 2.0 * zs * (W * (w * c * c).sum(axis=1) + wc * wc)
        f22 = 2.0 * zs * (W * (w * s * s).sum(axis=1) + ws * ws)
        f12 = 2.0 * zs * (W * (w * c * s).sum(axis=1) + wc * ws)
        out = crlb_batch(f11, f12, f22)
        return np.where(W > 0, out, np.nan)

    name = "crlb" + ("/acc" if acceptance else "") + ("/swerling" if swerling else "")
    est = run_blocks(mc, name, draw)
    if est.exclusion_rate > 0.01:
        warnings.warn(
            f"simulate_crlb excluded {est.exclusion_rate:.2%} of trials as singular geometries",
            RuntimeWarning,
            stacklevel=2,
        )
    return est


def _swerling_crlb(rng, w, th, zs, sigma_av):
    n, m = w.shape
    sig = rng.exponential(1.0, (n, m, m))
    sig = np.triu(sig) + np.swapaxes(np.triu(sig, 1), 1, 2)  # symmetric per-pair RCS ratio
    c, s = np.cos(th), np.sin(th)
    a = c[:, :, None] + c[:, None, :]
    b = s[:, :, None] + s[:, None, :]
    D = w[:, :, None] * w[:, None, :] * sig
    f11 = zs * (D * a * a).sum(axis=(1, 2))
    f22 = zs * (D * b * b).sum(axis=(1, 2))
    f12 = zs * (D * a * b).sum(axis=(1, 2))
    return crlb_batch(f11, f12, f22)


def simulate_gdop(N: int, mc: McConfig) -> McEstimate:
    """Mean GDoP over i.i.d. uniform bearings (unit distances and gain)."""
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        th = rng.uniform(0.0, 2.0 * math.pi, (n, N))
        return crlb_batch(*build_fim_batch(np.ones_like(th), th, 1.0, 2.0))

    return run_blocks(mc, f"gdop/{N}", draw)


# ---------------------------------------------------------------- acceptance

def simulate_acceptance(
    cluster: int, mu: float, psi: int, kind: Literal["sensing", "comm"], mc: McConfig
) -> McEstimate:
    """Frequency with which a BS accepts a request under a Poisson load.

    The BS sees n ~ Poisson(mu * Nbar(cluster)) requests. Sensing: each is
    served with probability min(1, psi/n). Comm: the requesting user competes
    for psi - 1 free slots, served with probability min(1, (psi-1)/max(n-1, 1)).
    """
    if kind == "comm" and psi < 2:
        raise DomainError("comm acceptance needs psi >= 2")
    if kind not in ("sensing", "comm"):
        raise DomainError(f"unknown kind {kind!r}")
    mean = mu * gamma_half_ratio_sq(cluster)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        load = rng.poisson(mean, n)
        if kind == "sensing":
            p = np.minimum(1.0, psi / np.maximum(load, 1))
        else:
            p = np.minimum(1.0, (psi - 1) / np.maximum(load - 1, 1))
        return (rng.random(n) < p).astype(float)

    return run_blocks(mc, f"acceptance/{kind}", draw)


# ------------------------------------------------------------------- Laplace

def simulate_laplace(
    z: float,
    r: float,
    L: int,
    params: CommParams,
    which: Literal["U", "I1", "I2"],
    mc: McConfig,
    kappa: float | None = None,
    conditioning: Literal["exact", "band"] = "exact",
    band: float = 0.02,
    tail_correction: bool = True,
) -> McEstimate:
    """E[exp(-z X)] for X in {U, I1, I2} given a serving distance near r.

    ``exact`` conditions on d_1 = r by drawing the remaining points as a PPP
    outside radius r. ``band`` keeps unconditional deployments whose nearest
    distance falls within r(1 +/- band) and warns when fewer than 0.1% do.
    Gains follow the gamma surrogate; members 2..L accept with probability kappa.
    """
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L}")
    if which not in ("U", "I1", "I2"):
        raise DomainError(f"unknown transform {which!r}")
    K = mc.point_count(params.lambda_b, L)
    lam, a, M = params.lambda_b, params.alpha, params.m_t
    k = kappa_c(L, params.mu_c, params.psi) if kappa is None else kappa
    rate_band = 0.0
    if conditioning == "band":
        c = lam * math.pi * r * r
        rate_band = math.exp(-c * (1 - band) ** 2) - math.exp(-c * (1 + band) ** 2)
        if rate_band < 1e-3:
            warnings.warn(f"conditioning band keeps only {rate_band:.2e} of deployments",
                          RuntimeWarning, stacklevel=2)
    elif conditioning != "exact":
        raise DomainError(f"unknown conditioning {conditioning!r}")

    def positions(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        if conditioning == "exact":
            g = lam * math.pi * r * r + np.cumsum(rng.standard_exponential((n, K - 1)), axis=1)
            return np.full(n, r), np.sqrt(g / (lam * math.pi))
        got_r, got_d, have = [], [], 0
        while have < n:
            m = max(64, int(1.2 * (n - have) / max(rate_band, 1e-6)))
            m = min(m, 200_000)
            d1 = np.sqrt(rng.standard_exponential(m) / (lam * math.pi))
            keep = np.abs(d1 / r - 1.0) <= band
            d1 = d1[keep][: n - have]
            if d1.size:
                g = lam * math.pi * d1[:, None] ** 2 + np.cumsum(
                    rng.standard_exponential((d1.size, K - 1)), axis=1)
                got_r.append(d1)
                got_d.append(np.sqrt(g / (lam * math.pi)))
                have += d1.size
        return np.concatenate(got_r), np.concatenate(got_d)

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        r1, d = positions(rng, n)
        pl = (r1[:, None] / d) ** a
        if which == "I2":
            out = pl[:, L - 1:]
            s = (rng.exponential(params.p_t, out.shape) * out).sum(axis=1)
            if tail_correction:
                s = s + r1**a * _tail_mean(lam, a, d[:, -1], params.p_t)
        else:
            coop = pl[:, : L - 1]
            acc = rng.random(coop.shape) < k
            if which == "U":
                g = np.where(acc, rng.gamma(M - 1, params.p_c, coop.shape), 0.0)
            else:
                g = np.where(acc, 0.0, rng.exponential(params.p_t, coop.shape))
            s = (g * coop).sum(axis=1)
        return np.exp(-z * s)

    return run_blocks(mc, f"laplace/{which}/{conditioning}", draw)
