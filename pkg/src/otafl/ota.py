"""Over-the-air gradient aggregation: the full uplink signal chain.

Per round, every user normalizes its local gradient to zero mean / unit
variance, scales it by a channel-inverting transmit coefficient, and all
users transmit simultaneously; the BS applies a receive beamformer and a
linear estimator to recover the weighted gradient sum.  The aggregation
error splits into a device-loss part (zero with full participation) and a
noise part whose expected power has a closed form.

Noise convention: the amplifier thermal noise that rides through the
surface is modelled with the ensemble statistics used by the closed form.
Per channel use, each side contributes

    sqrt(lambda * beta * eta0 * d_sr^-alpha * J) * S * u,

where u ~ CN(0, sigma_s^2) and S is the coherent sum of Q fresh Rician
coefficients (drawn directly as CN(Q*sqrt(kappa/(kappa+1)), Q/(kappa+1))).
The two sides are independent, so the noise-only received power is exactly
tau*sigma_s^2 + sigma_0^2 with tau as in :func:`cascaded_noise_gain`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import SystemConfig

__all__ = [
    "DegenerateGradientError",
    "UnreachableUserError",
    "GradientStats",
    "PowerAllocation",
    "OtaRoundResult",
    "normalize_gradient",
    "normalize_gradients",
    "pair_partner",
    "pair_gains",
    "compute_mu",
    "allocate_power",
    "cascaded_noise_gain",
    "transmit_round",
    "estimate_aggregate",
    "decompose_error",
    "noise_error_power",
    "run_ota_round",
]

# Stand-in spread reported by a user whose gradient has exactly zero
# variance: it transmits nothing and contributes only through the mean term.
DEGENERATE_NU = 1e-12


class DegenerateGradientError(ValueError):
    """Gradient with zero empirical variance cannot be normalized."""


class UnreachableUserError(RuntimeError):
    """A user (pair) has zero effective channel gain under the current beam."""


# ---------------------------------------------------------------- normalize


def normalize_gradient(g: np.ndarray, degenerate: str = "raise"):
    """Zero-mean / unit-variance transmit sequence for one gradient.

    Returns ``(x, g_bar, nu)`` with ``x = (g - g_bar) / nu`` using the
    empirical mean and standard deviation over the D entries.  A
    zero-variance gradient either raises (default) or, with
    ``degenerate="epsilon"``, yields x = 0 and nu = DEGENERATE_NU so the
    user's contribution reduces to its mean.
    """
    g = np.asarray(g, dtype=float)
    if g.size < 2:
        raise ValueError("gradient must have at least 2 entries")
    g_bar = float(g.mean())
    nu = float(g.std())
    if nu == 0.0:
        if degenerate == "raise":
            raise DegenerateGradientError("degenerate gradient: zero variance")
        return np.zeros_like(g), g_bar, DEGENERATE_NU
    return (g - g_bar) / nu, g_bar, nu


@dataclass(frozen=True)
class GradientStats:
    """Normalized transmit sequences for all users."""

    x: np.ndarray       # (n_users, D)
    g_bar: np.ndarray   # (n_users,)
    nu: np.ndarray      # (n_users,)


def normalize_gradients(grads: np.ndarray, degenerate: str = "epsilon") -> GradientStats:
    """Vectorized :func:`normalize_gradient` over a (n_users, D) stack."""
    grads = np.asarray(grads, dtype=float)
    g_bar = grads.mean(axis=1)
    nu = grads.std(axis=1)
    dead = nu == 0.0
    if np.any(dead) and degenerate == "raise":
        raise DegenerateGradientError(
            f"degenerate gradient: zero variance for users {np.flatnonzero(dead).tolist()}")
    safe_nu = np.where(dead, 1.0, nu)
    x = (grads - g_bar[:, None]) / safe_nu[:, None]
    x[dead] = 0.0
    return GradientStats(x=x, g_bar=g_bar, nu=np.where(dead, DEGENERATE_NU, nu))


# ---------------------------------------------------------------- power


def pair_partner(n_users: int, n_reflect: int) -> np.ndarray:
    """Partner index per user, pairing the i-th reflection user with the
    i-th transmission user; users without a counterpart get -1."""
    partner = np.full(n_users, -1, dtype=np.int64)
    n_transmit = n_users - n_reflect
    paired = min(n_reflect, n_transmit)
    partner[:paired] = n_reflect + np.arange(paired)
    partner[n_reflect:n_reflect + paired] = np.arange(paired)
    return partner


def pair_gains(f: np.ndarray, eff: np.ndarray, n_reflect: int):
    """Per-user beamformed gains.

    Returns ``(own, combined)``: ``own[i] = |f^H h_i|^2`` and ``combined[i]``
    adds the partner's gain (the i-th reflection and i-th transmission user
    share one power-control denominator; unpaired users stand alone).
    """
    proj = eff.conj() @ f             # (f^H h_i)* per user
    own = np.abs(proj) ** 2
    partner = pair_partner(eff.shape[0], n_reflect)
    combined = own.copy()
    has = partner >= 0
    combined[has] += own[partner[has]]
    return own, combined


def compute_mu(f: np.ndarray, eff: np.ndarray, n_reflect: int,
               K: np.ndarray, nu: np.ndarray, p_max: float) -> float:
    """Power-control scale: mu = min over users of P * G_pair / (K^2 nu^2).

    The minimizing user transmits at its power budget; everyone else backs
    off so the estimator's 1/sqrt(mu) inversion is common to all.
    """
    _, combined = pair_gains(f, eff, n_reflect)
    if np.any(combined <= 0.0):
        raise UnreachableUserError(
            f"unreachable user: zero pair gain at indices {np.flatnonzero(combined <= 0).tolist()}")
    K = np.asarray(K, dtype=float)
    nu = np.asarray(nu, dtype=float)
    mu = float(np.min(p_max * combined / (K ** 2 * nu ** 2)))
    if not np.isfinite(mu) or mu <= 0:
        raise UnreachableUserError("unreachable user: non-positive power scale")
    return mu


@dataclass(frozen=True)
class PowerAllocation:
    """Per-user complex transmit amplitudes and the shared scale mu.

    ``p[i]`` inverts the user's own beamformed channel so that
    f^H h_i * p_i = sqrt(mu) * K_i * nu_i exactly.  ``budget_power`` is the
    pair-accounted magnitude mu K^2 nu^2 / G_pair, which is <= p_max with
    equality for the binding user.
    """

    p: np.ndarray               # (n_users,) complex amplitudes
    mu: float
    budget_power: np.ndarray    # (n_users,) pair-accounted |p|^2


def allocate_power(f: np.ndarray, eff: np.ndarray, n_reflect: int,
                   K: np.ndarray, nu: np.ndarray, p_max: float,
                   mu: float | None = None) -> PowerAllocation:
    if mu is None:
        mu = compute_mu(f, eff, n_reflect, K, nu, p_max)
    own, combined = pair_gains(f, eff, n_reflect)
    if np.any(own <= 0.0):
        raise UnreachableUserError(
            f"unreachable user: zero own gain at indices {np.flatnonzero(own <= 0).tolist()}")
    proj = eff @ f.conj()             # f^H h_i per user
    K = np.asarray(K, dtype=float)
    nu = np.asarray(nu, dtype=float)
    p = np.sqrt(mu) * K * nu * proj.conj() / own
    budget = mu * K ** 2 * nu ** 2 / combined
    return PowerAllocation(p=p, mu=mu, budget_power=budget)


# ---------------------------------------------------------------- noise


def cascaded_noise_gain(cfg: SystemConfig, d_sr: float) -> float:
    """Gain tau multiplying the amplifier noise power at the BS:

        tau = lambda (beta_t + beta_r) eta0 d_sr^-alpha J Q (Q kappa + 1)/(kappa + 1)
    """
    k = cfg.kappa
    return (cfg.lambda_amp * (cfg.beta_t + cfg.beta_r) * cfg.eta0 * d_sr ** (-cfg.alpha)
            * cfg.J * cfg.Q * (cfg.Q * k + 1.0) / (k + 1.0))


def _coherent_sum(rng: np.random.Generator, cfg: SystemConfig, size: int) -> np.ndarray:
    """Sum of Q fresh Rician coefficients, drawn directly as one complex
    Gaussian (mean Q*sqrt(kappa/(kappa+1)), variance Q/(kappa+1))."""
    k = cfg.kappa
    mean = cfg.Q * np.sqrt(k / (k + 1.0))
    std = np.sqrt(cfg.Q / (k + 1.0) / 2.0)
    return mean + std * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def _noise_samples(cfg: SystemConfig, d_sr: float, rng: np.random.Generator,
                   size: int) -> np.ndarray:
    """Received noise per channel use: amplifier noise through both surface
    sides plus receiver noise.  E|.|^2 = tau*sigma_s^2 + sigma_0^2."""
    z = np.zeros(size, dtype=complex)
    if cfg.sigma_s2 > 0.0:
        base = cfg.eta0 * d_sr ** (-cfg.alpha) * cfg.J * cfg.lambda_amp
        for beta in (cfg.beta_r, cfg.beta_t):
            u = np.sqrt(cfg.sigma_s2 / 2.0) * (
                rng.standard_normal(size) + 1j * rng.standard_normal(size))
            z += np.sqrt(base * beta) * _coherent_sum(rng, cfg, size) * u
    if cfg.sigma_02 > 0.0:
        z += np.sqrt(cfg.sigma_02 / 2.0) * (
            rng.standard_normal(size) + 1j * rng.standard_normal(size))
    return z


# ---------------------------------------------------------------- round


def transmit_round(stats: GradientStats, powers: PowerAllocation,
                   eff: np.ndarray, f: np.ndarray, cfg: SystemConfig,
                   rng: np.random.Generator, d_sr: float) -> np.ndarray:
    """Superposed received signal after beamforming, one complex sample per
    gradient dimension (noise drawn independently per dimension)."""
    proj = eff @ f.conj()                         # f^H h_i per user
    coeff = proj * powers.p                       # = sqrt(mu) K_i nu_i by construction
    y = (coeff / stats.nu) @ stats.x              # sum_i coeff_i (g_i - mean_i)/nu_i
    return y + _noise_samples(cfg, d_sr, rng, stats.x.shape[1])


def estimate_aggregate(y: np.ndarray, mu: float, g_bar: np.ndarray,
                       K: np.ndarray) -> np.ndarray:
    """Linear estimate of the weighted gradient sum: Re(y)/sqrt(mu) plus the
    reinserted weighted means (gradients are real, so the imaginary part of
    y carries noise only)."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    mean_term = float(np.asarray(K, dtype=float) @ np.asarray(g_bar, dtype=float))
    return y.real / np.sqrt(mu) + mean_term


def decompose_error(r_hat: np.ndarray, r_true: np.ndarray,
                    grad_true: np.ndarray, K: np.ndarray):
    """Split the aggregation error into device-loss and noise parts:

        e1 = grad_true - r_true / sum(K)   (zero with full participation)
        e2 = (r_true - r_hat) / sum(K)
    """
    sum_k = float(np.asarray(K, dtype=float).sum())
    e1 = grad_true - r_true / sum_k
    e2 = (r_true - r_hat) / sum_k
    return e1, e2


@dataclass(frozen=True)
class OtaRoundResult:
    y: np.ndarray           # (D,) complex received stream
    r_hat: np.ndarray       # (D,) estimated weighted gradient sum
    r_true: np.ndarray      # (D,) sum_i K_i g_i
    e1: np.ndarray
    e2: np.ndarray
    mu: float

    @property
    def e1_norm2(self) -> float:
        return float(self.e1 @ self.e1)

    @property
    def e2_norm2(self) -> float:
        return float(self.e2 @ self.e2)


def run_ota_round(grads: np.ndarray, eff: np.ndarray, f: np.ndarray,
                  cfg: SystemConfig, K: np.ndarray, rng: np.random.Generator,
                  d_sr: float, grad_true: np.ndarray | None = None) -> OtaRoundResult:
    """Full uplink chain for one stack of local gradients (n_users, D)."""
    stats = normalize_gradients(grads)
    powers = allocate_power(f, eff, cfg.N, K, stats.nu, cfg.p_max)
    y = transmit_round(stats, powers, eff, f, cfg, rng, d_sr)
    r_hat = estimate_aggregate(y, powers.mu, stats.g_bar, K)
    r_true = np.asarray(K, dtype=float) @ grads
    if grad_true is None:
        grad_true = r_true / float(np.asarray(K, dtype=float).sum())
    e1, e2 = decompose_error(r_hat, r_true, grad_true, K)
    return OtaRoundResult(y=y, r_hat=r_hat, r_true=r_true, e1=e1, e2=e2, mu=powers.mu)


# ---------------------------------------------------------------- closed form


def noise_error_power(cfg: SystemConfig, f: np.ndarray, eff: np.ndarray,
                      K: np.ndarray, nu: np.ndarray, d_sr: float) -> float:
    """Closed-form expected noise-error power of the aggregation:

        Phi (tau sigma_s^2 + sigma_0^2) / (P (sum K)^2)
            * max_i  K_i^2 nu_i^2 / (|f^H h_n|^2 + |f^H h_m|^2)

    evaluated per user with the pair-combined gain in the denominator.
    """
    _, combined = pair_gains(f, eff, cfg.N)
    if np.any(combined <= 0.0):
        raise UnreachableUserError(
            f"unreachable user: zero pair gain at indices {np.flatnonzero(combined <= 0).tolist()}")
    K = np.asarray(K, dtype=float)
    nu = np.asarray(nu, dtype=float)
    n_users = eff.shape[0]
    tau = cascaded_noise_gain(cfg, d_sr)
    worst = float(np.max(K ** 2 * nu ** 2 / combined))
    return n_users * (tau * cfg.sigma_s2 + cfg.sigma_02) / (cfg.p_max * K.sum() ** 2) * worst
