"""Rician channel generation and surface phase/amplification matrices.

One :class:`ChannelRealization` holds every complex link of the scenario:
the direct BS-user vectors, the BS-surface matrix, and the surface-user
vectors, all with path loss folded in.  Effective per-user channels are the
direct link plus the surface cascade; transmission-side users have no
direct link (the surface blocks it) unless the surface itself is removed,
in which case they fall back to a penetration-attenuated direct link.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scenario import Geometry, SystemConfig, db_to_linear

__all__ = [
    "ChannelRealization",
    "StarsState",
    "sample_channels",
    "build_theta",
    "effective_channel",
    "effective_channels",
    "dump_realization_csv",
]


def _rician(rng: np.random.Generator, kappa: float, shape) -> np.ndarray:
    """Unit-power Rician small-scale coefficients: fixed LoS part plus
    CN(0, 1/(kappa+1)) scatter."""
    los = np.sqrt(kappa / (kappa + 1.0))
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return los + np.sqrt(1.0 / (kappa + 1.0)) * scatter


def _path_amp(eta0: float, dist, alpha: float):
    """Amplitude scaling sqrt(eta0 * d^-alpha)."""
    return np.sqrt(eta0 * np.asarray(dist, dtype=float) ** (-alpha))


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of all complex channels (path loss included).

    ``h_direct`` is sampled for every user; whether a user's direct link
    actually contributes is decided by :func:`effective_channels` (blocked
    for transmission-side users while the surface is up).
    """

    h_direct: np.ndarray    # (n_users, J) BS-user links
    H_sr: np.ndarray        # (J, Q) BS-surface matrix
    h_r: np.ndarray         # (n_users, Q) surface-user links
    n_reflect: int          # users 0..n_reflect-1 are reflection side

    @property
    def n_users(self) -> int:
        return self.h_direct.shape[0]


def sample_channels(cfg: SystemConfig, geom: Geometry,
                    rng: np.random.Generator) -> ChannelRealization:
    """Draw one quasi-static channel realization for the whole scenario."""
    d_su = geom.d_su
    d_bu = geom.d_bu
    if geom.d_sr <= 0 or np.any(d_su <= 0) or np.any(d_bu <= 0):
        raise ValueError("geometry has a non-positive link distance")

    H_sr = _path_amp(cfg.eta0, geom.d_sr, cfg.alpha) * _rician(rng, cfg.kappa, (cfg.J, cfg.Q))
    h_direct = _path_amp(cfg.eta0, d_bu, cfg.alpha)[:, None] * _rician(
        rng, cfg.kappa, (geom.n_users, cfg.J))
    h_r = _path_amp(cfg.eta0, d_su, cfg.alpha)[:, None] * _rician(
        rng, cfg.kappa, (geom.n_users, cfg.Q))
    return ChannelRealization(h_direct=h_direct, H_sr=H_sr, h_r=h_r, n_reflect=cfg.N)


# ---------------------------------------------------------------- surface


@dataclass(frozen=True)
class StarsState:
    """Surface configuration: reflection/transmission phases plus gains.

    The diagonal response of each side is sqrt(lambda_amp * beta) *
    exp(j*theta_q); every diagonal entry has that exact modulus.
    """

    theta_n: np.ndarray     # (Q,) reflection phases in [0, 2pi)
    theta_m: np.ndarray     # (Q,) transmission phases in [0, 2pi)
    lambda_amp: float
    beta_r: float
    beta_t: float

    def __post_init__(self):
        object.__setattr__(self, "theta_n", np.mod(np.asarray(self.theta_n, dtype=float), 2 * np.pi))
        object.__setattr__(self, "theta_m", np.mod(np.asarray(self.theta_m, dtype=float), 2 * np.pi))

    @property
    def diag_n(self) -> np.ndarray:
        """Reflection-side diagonal as a Q-vector."""
        return np.sqrt(self.lambda_amp * self.beta_r) * np.exp(1j * self.theta_n)

    @property
    def diag_m(self) -> np.ndarray:
        """Transmission-side diagonal as a Q-vector."""
        return np.sqrt(self.lambda_amp * self.beta_t) * np.exp(1j * self.theta_m)

    def matrix(self, side: str) -> np.ndarray:
        if side == "n":
            return np.diag(self.diag_n)
        if side == "m":
            return np.diag(self.diag_m)
        raise ValueError(f"side must be 'n' or 'm', got {side!r}")


def stars_from_config(cfg: SystemConfig, theta_n, theta_m) -> StarsState:
    return StarsState(theta_n=np.asarray(theta_n, dtype=float),
                      theta_m=np.asarray(theta_m, dtype=float),
                      lambda_amp=cfg.lambda_amp, beta_r=cfg.beta_r, beta_t=cfg.beta_t)


def build_theta(phases, amp: float, beta: float) -> np.ndarray:
    """Diagonal phase-shift/amplification matrix sqrt(amp*beta)*diag(e^{j theta})."""
    phases = np.asarray(phases, dtype=float)
    if not np.all(np.isfinite(phases)):
        raise ValueError("non-finite phase")
    if not (0.0 < beta <= 1.0) or amp <= 0:
        raise ValueError(f"need beta in (0, 1] and amp > 0; got beta={beta}, amp={amp}")
    return np.sqrt(amp * beta) * np.diag(np.exp(1j * phases))


# ---------------------------------------------------------------- effective


def effective_channels(real: ChannelRealization, stars: StarsState,
                       surface_on: bool = True,
                       noris_pen_db: float = -50.0) -> np.ndarray:
    """Composite per-user channels at the BS, (n_users, J).

    Reflection users: direct link + H_sr @ Theta_n @ h_r.
    Transmission users: H_sr @ Theta_m @ h_r only (direct link blocked).
    With ``surface_on=False`` the cascades vanish and transmission users
    keep a direct link attenuated by ``noris_pen_db`` (power dB).
    """
    nr = real.n_reflect
    out = np.zeros_like(real.h_direct)
    if surface_on:
        # H_sr @ diag(v) @ h_r  ==  (H_sr * v) @ h_r, vectorized over users
        out[:nr] = real.h_direct[:nr] + real.h_r[:nr] @ (real.H_sr * stars.diag_n).T
        out[nr:] = real.h_r[nr:] @ (real.H_sr * stars.diag_m).T
    else:
        pen_amp = np.sqrt(db_to_linear(noris_pen_db))
        out[:nr] = real.h_direct[:nr]
        out[nr:] = pen_amp * real.h_direct[nr:]
    return out


def effective_channel(real: ChannelRealization, stars: StarsState, user: int) -> np.ndarray:
    """Effective channel of one user (surface up), J-vector."""
    if not (0 <= user < real.n_users):
        raise IndexError(f"user index {user} out of range")
    if user < real.n_reflect:
        return real.h_direct[user] + (real.H_sr * stars.diag_n) @ real.h_r[user]
    return (real.H_sr * stars.diag_m) @ real.h_r[user]


def dump_realization_csv(real: ChannelRealization, path: str) -> None:
    """Write every complex entry as (link, row, col, re, im) for cross-tool checks."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["link", "row", "col", "re", "im"])
        for name, arr in (("h_direct", real.h_direct),
                          ("H_sr", real.H_sr),
                          ("h_r", real.h_r)):
            for (i, j), v in np.ndenumerate(arr):
                w.writerow([name, i, j, f"{v.real:.17g}", f"{v.imag:.17g}"])
