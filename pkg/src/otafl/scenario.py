"""System configuration, geometry, and per-user dataset-size assignment.

Everything downstream (channels, OTA aggregation, bounds) reads physical
parameters from :class:`SystemConfig`.  All dB/dBm quantities are converted
to linear scale / watts exactly once, at config-load time; the dataclass
itself stores linear values only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

__all__ = [
    "ConfigError",
    "SystemConfig",
    "Geometry",
    "DataAssignment",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "load_config",
    "parse_overrides",
    "place_users",
    "assign_data",
    "rng_for",
]


class ConfigError(ValueError):
    """Invalid configuration file or parameter value."""


# ---------------------------------------------------------------- units


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    return 10.0 * math.log10(linear)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """Independent RNG stream derived from a root seed plus integer tags.

    Trials, sweep points, and noise processes each get their own stream so
    that runs are reproducible and parallelizable without shared state.
    """
    return np.random.default_rng([int(seed), *[int(t) for t in tags]])


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class SystemConfig:
    """Physical and learning parameters (linear scale / watts throughout).

    Default values follow the simulation setup this package reproduces.
    Note that the receive-antenna count is housed as ``J``: the source
    setup reuses the letter N both for antennas and for the reflection
    user count, so the antenna count gets its own symbol here.
    """

    J: int = 5              # BS receive antennas
    Q: int = 30             # surface elements
    N: int = 40             # reflection-side users
    M: int = 40             # transmission-side users
    kappa: float = db_to_linear(-5.0)       # Rician factor, linear
    alpha: float = 2.0                      # path-loss exponent
    eta0: float = db_to_linear(-30.0)       # reference path loss, linear
    lambda_amp: float = 5.0                 # surface amplification (power gain)
    beta_r: float = 0.7                     # reflection amplitude coefficient
    beta_t: float = 0.3                     # transmission amplitude coefficient
    sigma_s2: float = dbm_to_watts(-70.0)   # amplifier thermal-noise power, W
    sigma_02: float = dbm_to_watts(-90.0)   # receiver noise power, W
    p_max: float = 1e-6     # per-user transmit power budget, W (not pinned by
                            # the reference setup; chosen so uplink noise is a
                            # visible but not destructive effect at desk scale)
    eta_lr: float = 0.01    # learning rate
    rho_reg: float = 1.0    # regularization parameter (strong-convexity modulus)
    T: int = 100            # training rounds
    seed: int = 1
    surface_on: bool = True         # False: cascaded links zeroed (no-surface baseline)
    noris_pen_db: float = -50.0     # penetration loss for blocked-side direct links
                                    # when the surface is absent, dB (power)

    def __post_init__(self):
        for name in ("J", "Q", "N", "M"):
            v = getattr(self, name)
            if int(v) != v or (name in ("J", "Q") and v < 1) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer (>=1 for J, Q); got {v}")
        for name in ("kappa", "eta0", "lambda_amp", "sigma_s2", "sigma_02",
                     "p_max", "eta_lr", "rho_reg", "alpha"):
            v = getattr(self, name)
            if not (name in ("sigma_s2", "sigma_02")) and v <= 0:
                raise ConfigError(f"{name} must be strictly positive; got {v}")
            if v < 0:
                raise ConfigError(f"{name} must be non-negative; got {v}")
        if not (0.0 < self.beta_r <= 1.0) or not (0.0 < self.beta_t <= 1.0):
            raise ConfigError(
                f"beta_r, beta_t must lie in (0, 1]; got beta_r={self.beta_r}, beta_t={self.beta_t}"
            )
        if self.beta_r + self.beta_t > 1.0 + 1e-12:
            raise ConfigError(
                f"beta sum exceeds 1: beta_r={self.beta_r} + beta_t={self.beta_t}"
                f" = {self.beta_r + self.beta_t}"
            )
        if self.T < 1:
            raise ConfigError(f"T must be >= 1; got {self.T}")

    @property
    def n_users(self) -> int:
        return self.N + self.M


# Config-file keys carrying dB/dBm values and the linear field they map to.
_DB_KEYS = {
    "kappa_db": ("kappa", db_to_linear),
    "eta0_db": ("eta0", db_to_linear),
    "sigma_s2_dbm": ("sigma_s2", dbm_to_watts),
    "sigma_02_dbm": ("sigma_02", dbm_to_watts),
    "p_max_dbm": ("p_max", dbm_to_watts),
}
_INT_FIELDS = {"J", "Q", "N", "M", "T", "seed"}
_BOOL_FIELDS = {"surface_on"}


def _coerce(name: str, raw: str):
    if name in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected integer, got {raw!r}") from exc
    if name in _BOOL_FIELDS:
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{name}: expected boolean, got {raw!r}")
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: expected number, got {raw!r}") from exc


def parse_overrides(pairs) -> dict:
    """Parse ``key=value`` strings (CLI ``--set``) into a raw override map."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value; got {pair!r}")
        key, _, raw = pair.partition("=")
        out[key.strip()] = raw.strip()
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> SystemConfig:
    """Build a validated :class:`SystemConfig` from a flat key=value file.

    ``path`` may be None (defaults only).  ``overrides`` maps key -> value
    (strings are coerced; already-typed values pass through) and wins over
    the file.  Keys with a ``_db``/``_dbm`` suffix are converted to linear
    scale here, exactly once; unknown keys are rejected.
    """
    raw: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, val = line.partition("=")
                raw[key.strip()] = val.strip()
    for key, val in (overrides or {}).items():
        raw[key] = val

    known = {f.name for f in fields(SystemConfig)}
    kwargs = {}
    for key, val in raw.items():
        if key in _DB_KEYS:
            target, conv = _DB_KEYS[key]
            v = val if isinstance(val, (int, float)) else _coerce(key, val)
            kwargs[target] = conv(float(v))
        elif key in known:
            kwargs[key] = val if not isinstance(val, str) else _coerce(key, val)
        else:
            raise ConfigError(f"unknown config key: {key!r}")
    return SystemConfig(**kwargs)


# ---------------------------------------------------------------- geometry

# BS and surface positions, and the two ground-level user rectangles.  The
# reflection box sits at x in [50, 70] and the transmission box at
# x in [30, 50]; both share y in [40, 60].  The boxes are intentionally on
# the same side in y (that is how the deployment is defined), so "reflection"
# vs "transmission" is a tag, not a mirrored half-space.
BS_POS = np.array([0.0, 0.0, 10.0])
STARS_POS = np.array([50.0, 0.0, 10.0])
_REFLECT_BOX = ((50.0, 70.0), (40.0, 60.0))
_TRANSMIT_BOX = ((30.0, 50.0), (40.0, 60.0))

REGION_REFLECT = "reflection"
REGION_TRANSMIT = "transmission"


@dataclass(frozen=True)
class Geometry:
    """Positions of the BS, the surface, and every user, plus region tags.

    Users are ordered reflection side first (indices ``0..N-1``), then
    transmission side (``N..N+M-1``).
    """

    bs_pos: np.ndarray
    stars_pos: np.ndarray
    user_pos: np.ndarray        # (n_users, 3)
    regions: tuple              # per-user REGION_* tag

    @property
    def n_users(self) -> int:
        return self.user_pos.shape[0]

    @property
    def d_sr(self) -> float:
        """BS-to-surface distance."""
        return float(np.linalg.norm(self.bs_pos - self.stars_pos))

    @property
    def d_su(self) -> np.ndarray:
        """Surface-to-user distances, (n_users,)."""
        return np.linalg.norm(self.user_pos - self.stars_pos, axis=1)

    @property
    def d_bu(self) -> np.ndarray:
        """Direct BS-to-user distances, (n_users,)."""
        return np.linalg.norm(self.user_pos - self.bs_pos, axis=1)


def _uniform_in_box(rng: np.random.Generator, box, count: int) -> np.ndarray:
    (x0, x1), (y0, y1) = box
    pos = np.zeros((count, 3))
    pos[:, 0] = rng.uniform(x0, x1, size=count)
    pos[:, 1] = rng.uniform(y0, y1, size=count)
    return pos


def place_users(cfg: SystemConfig, rng: np.random.Generator) -> Geometry:
    """Drop N reflection-side and M transmission-side users uniformly in
    their ground rectangles.  Deterministic given the rng state."""
    refl = _uniform_in_box(rng, _REFLECT_BOX, cfg.N)
    tran = _uniform_in_box(rng, _TRANSMIT_BOX, cfg.M)
    user_pos = np.vstack([refl, tran])
    regions = tuple([REGION_REFLECT] * cfg.N + [REGION_TRANSMIT] * cfg.M)
    return Geometry(
        bs_pos=BS_POS.copy(),
        stars_pos=STARS_POS.copy(),
        user_pos=user_pos,
        regions=regions,
    )


# ---------------------------------------------------------------- data sizes

SET1 = "set1"
SET2 = "set2"

SET1_LOCAL_SIZE = 750
SET2_SMALL_RANGE = (100, 200)
SET2_LARGE_RANGE = (1000, 2000)


@dataclass(frozen=True)
class DataAssignment:
    """Per-user local sample counts K_phi and the partition mode."""

    K_phi: np.ndarray       # (n_users,) integers
    mode: str

    @property
    def total(self) -> int:
        return int(self.K_phi.sum())


def assign_data(cfg: SystemConfig, mode: str, rng: np.random.Generator) -> DataAssignment:
    """Draw the local dataset sizes.

    set1: every user holds the same count (750).  set2: ceil(n/2) users draw
    uniformly from [100, 200] and the rest from [1000, 2000]; which users
    land in the small half is a seeded random choice.
    """
    n = cfg.n_users
    if mode == SET1:
        counts = np.full(n, SET1_LOCAL_SIZE, dtype=np.int64)
    elif mode == SET2:
        n_small = (n + 1) // 2
        counts = np.empty(n, dtype=np.int64)
        small = rng.integers(SET2_SMALL_RANGE[0], SET2_SMALL_RANGE[1] + 1, size=n_small)
        large = rng.integers(SET2_LARGE_RANGE[0], SET2_LARGE_RANGE[1] + 1, size=n - n_small)
        order = rng.permutation(n)
        counts[order[:n_small]] = small
        counts[order[n_small:]] = large
    else:
        raise ConfigError(f"unknown data mode: {mode!r} (expected {SET1!r} or {SET2!r})")
    return DataAssignment(K_phi=counts, mode=mode)
