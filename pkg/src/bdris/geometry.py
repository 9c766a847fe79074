"""Scenario geometry, path gains, fading draws and the end-to-end channel.

Localized surfaces use one path gain per link (taken at the array centroid);
distributed surfaces use one path gain per element.
"""

from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError
from .units import db_to_linear

TX_DEFAULT = (0.0, 0.0, 0.0)
RX_DEFAULT = (20.0, 0.0, 0.0)
LOCALIZED_CENTER = (20.0, 0.0, 2.0)
LOCALIZED_SPACING_M = 0.05
DISTRIBUTED_START = (0.0, 0.0, 2.0)
DISTRIBUTED_END = (40.0, 0.0, 2.0)

# substream ids, one per channel matrix
STREAM_H_RT = 0
STREAM_H_R = 1
STREAM_H_T = 2


def _vec3(x, name):
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ContractError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Positions (meters) plus large-scale channel parameters.

    ``localized`` selects the channel model: one path gain per link measured
    from the array centroid, or one per element.
    """

    tx_position: np.ndarray
    rx_position: np.ndarray
    ris_positions: np.ndarray
    c0_db: float = -30.0
    pathloss_exponent: float = 4.0
    tx_power_w: float = 10.0
    noise_power_w: float = 1e-12
    direct_blocked: bool = True
    localized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tx_position", _vec3(self.tx_position, "tx_position"))
        object.__setattr__(self, "rx_position", _vec3(self.rx_position, "rx_position"))
        ris = np.atleast_2d(np.asarray(self.ris_positions, dtype=float))
        if ris.ndim != 2 or ris.shape[1] != 3 or ris.shape[0] < 1:
            raise ContractError("ris_positions must be an (N, 3) array with N >= 1")
        if len(np.unique(ris, axis=0)) != len(ris):
            raise ContractError("RIS element positions must be distinct")
        object.__setattr__(self, "ris_positions", ris)
        if not self.pathloss_exponent > 0:
            raise ContractError("pathloss_exponent must be positive")
        if not self.tx_power_w > 0:
            raise ContractError("tx_power_w must be positive")

    @property
    def n(self):
        return len(self.ris_positions)

    @property
    def c0(self):
        return float(db_to_linear(self.c0_db))

    def replace(self, **changes):
        fields = {
            "tx_position": self.tx_position,
            "rx_position": self.rx_position,
            "ris_positions": self.ris_positions,
            "c0_db": self.c0_db,
            "pathloss_exponent": self.pathloss_exponent,
            "tx_power_w": self.tx_power_w,
            "noise_power_w": self.noise_power_w,
            "direct_blocked": self.direct_blocked,
            "localized": self.localized,
        }
        fields.update(changes)
        return Scenario(**fields)

    # flat key-value config -------------------------------------------------

    def to_config(self):
        """Serialize to flat ``key = value`` text (SI units, dB where named)."""

        def fmt(v):
            return ", ".join(repr(float(c)) for c in v)

        lines = [
            f"tx_position = {fmt(self.tx_position)}",
            f"rx_position = {fmt(self.rx_position)}",
            "ris_positions = " + "; ".join(fmt(p) for p in self.ris_positions),
            f"c0_db = {self.c0_db!r}",
            f"pathloss_exponent = {self.pathloss_exponent!r}",
            f"tx_power_w = {self.tx_power_w!r}",
            f"noise_power_w = {self.noise_power_w!r}",
            f"direct_blocked = {str(bool(self.direct_blocked)).lower()}",
            f"localized = {str(bool(self.localized)).lower()}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text):
        kv = parse_flat_config(text)
        try:
            ris = [
                [float(c) for c in p.split(",")]
                for p in kv["ris_positions"].split(";")
                if p.strip()
            ]
            return cls(
                tx_position=[float(c) for c in kv["tx_position"].split(",")],
                rx_position=[float(c) for c in kv["rx_position"].split(",")],
                ris_positions=ris,
                c0_db=float(kv.get("c0_db", -30.0)),
                pathloss_exponent=float(kv.get("pathloss_exponent", 4.0)),
                tx_power_w=float(kv.get("tx_power_w", 10.0)),
                noise_power_w=float(kv.get("noise_power_w", 1e-12)),
                direct_blocked=parse_bool(kv.get("direct_blocked", "true")),
                localized=parse_bool(kv.get("localized", "false")),
            )
        except KeyError as exc:
            raise ContractError(f"missing scenario key {exc.args[0]!r}") from None


def parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ContractError(f"not a boolean: {text!r}")


def parse_flat_config(text):
    """Parse ``key = value`` lines (``#`` comments allowed) into a dict."""
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def localized_scenario(n, spacing=LOCALIZED_SPACING_M, center=LOCALIZED_CENTER,
                       rx=RX_DEFAULT, tx=TX_DEFAULT, **kwargs):
    """ULA of ``n`` elements along x, centered at ``center``."""
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
    pos = np.tile(np.asarray(center, dtype=float), (n, 1))
    pos[:, 0] += offsets
    return Scenario(tx, rx, pos, localized=True, **kwargs)


def distributed_scenario(n, start=DISTRIBUTED_START, end=DISTRIBUTED_END,
                         rx=RX_DEFAULT, tx=TX_DEFAULT, **kwargs):
    """``n`` elements uniformly spaced on the segment ``start`` -> ``end``."""
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    s, e = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    pos = s[None, :] + t[:, None] * (e - s)[None, :]
    return Scenario(tx, rx, pos, localized=False, **kwargs)


class FadingKind(str, enum.Enum):
    RAYLEIGH = "rayleigh"
    LOS = "los"


@dataclass(frozen=True)
class FadingSpec:
    kind: FadingKind = FadingKind.RAYLEIGH
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", FadingKind(self.kind))
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ContractError("rng_seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Direct (N_R x N_T), RIS-to-RX (N_R x N) and TX-to-RIS (N x N_T) channels."""

    h_rt: np.ndarray
    h_r: np.ndarray
    h_t: np.ndarray
    _dims: tuple = field(init=False, repr=False)

    def __post_init__(self):
        h_rt = np.atleast_2d(np.asarray(self.h_rt, dtype=complex))
        h_r = np.atleast_2d(np.asarray(self.h_r, dtype=complex))
        h_t = np.atleast_2d(np.asarray(self.h_t, dtype=complex))
        n_r, n = h_r.shape
        if h_t.shape[0] != n or h_rt.shape != (n_r, h_t.shape[1]):
            raise ContractError(
                f"inconsistent channel shapes {h_rt.shape}, {h_r.shape}, {h_t.shape}"
            )
        object.__setattr__(self, "h_rt", h_rt)
        object.__setattr__(self, "h_r", h_r)
        object.__setattr__(self, "h_t", h_t)
        object.__setattr__(self, "_dims", (n, h_t.shape[1], n_r))

    @property
    def n(self):
        return self._dims[0]

    @property
    def n_t(self):
        return self._dims[1]

    @property
    def n_r(self):
        return self._dims[2]


def path_gain(distance, c0_db, a):
    """Linear path gain ``10**(c0_db/10) * distance**(-a)``."""
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("path_gain needs strictly positive distances")
    out = db_to_linear(c0_db) * d ** (-float(a))
    return float(out) if out.ndim == 0 else out


def element_distances(scenario):
    """Per-element distances to RX and TX, and the TX-RX distance."""
    d_r = np.linalg.norm(scenario.ris_positions - scenario.rx_position, axis=1)
    d_t = np.linalg.norm(scenario.ris_positions - scenario.tx_position, axis=1)
    d_rt = float(np.linalg.norm(scenario.rx_position - scenario.tx_position))
    return d_r, d_t, d_rt


def centroid_distances(scenario):
    """Array-centroid distances ``(d_R, d_T)`` used by the localized model."""
    c = scenario.ris_positions.mean(axis=0)
    return (float(np.linalg.norm(c - scenario.rx_position)),
            float(np.linalg.norm(c - scenario.tx_position)))


def substream(seed, *key):
    """Independent generator for ``(seed, *key)``.

    Every channel matrix of every trial gets its own PCG64 stream keyed by
    ``(seed, trial, matrix_id)`` so draws never depend on call order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)])))


def _small_scale(rng, shape, kind):
    if kind is FadingKind.RAYLEIGH:
        z = rng.standard_normal(shape + (2,))
        return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, shape))


def link_gains(scenario):
    """Path gains ``(rho_R, rho_T, rho_RT)``; the first two are N-vectors."""
    c0_db, a = scenario.c0_db, scenario.pathloss_exponent
    d_r, d_t, d_rt = element_distances(scenario)
    if scenario.localized:
        dr_c, dt_c = centroid_distances(scenario)
        rho_r = np.full(scenario.n, path_gain(dr_c, c0_db, a))
        rho_t = np.full(scenario.n, path_gain(dt_c, c0_db, a))
    else:
        rho_r = path_gain(d_r, c0_db, a) * np.ones(scenario.n)
        rho_t = path_gain(d_t, c0_db, a) * np.ones(scenario.n)
    rho_rt = 0.0 if scenario.direct_blocked else path_gain(d_rt, c0_db, a)
    return rho_r, rho_t, rho_rt


def draw_channels(scenario, fading, n_t=1, n_r=1, trial=0):
    """Draw one fading realization.

    ``trial`` selects the substream so Monte Carlo workers can draw trial
    ``k`` without replaying trials ``0..k-1``.
    """
    if n_t < 1 or n_r < 1:
        raise ContractError("antenna counts must be >= 1")
    fading = FadingSpec(fading.kind, fading.rng_seed)
    n = scenario.n
    rho_r, rho_t, rho_rt = link_gains(scenario)
    seed = fading.rng_seed
    g_r = _small_scale(substream(seed, trial, STREAM_H_R), (n_r, n), fading.kind)
    g_t = _small_scale(substream(seed, trial, STREAM_H_T), (n, n_t), fading.kind)
    h_r = g_r * np.sqrt(rho_r)[None, :]
    h_t = np.sqrt(rho_t)[:, None] * g_t
    if scenario.direct_blocked:
        h_rt = np.zeros((n_r, n_t), dtype=complex)
    else:
        h_rt = np.sqrt(rho_rt) * _small_scale(
            substream(seed, trial, STREAM_H_RT), (n_r, n_t), fading.kind
        )
    return ChannelSet(h_rt, h_r, h_t)


def compose_channel(channels, theta):
    """End-to-end channel ``H_RT + H_R @ theta @ H_T``."""
    theta = np.asarray(theta, dtype=complex)
    n = channels.n
    if theta.shape != (n, n):
        raise ContractError(f"theta must be {n}x{n}, got {theta.shape}")
    return channels.h_rt + channels.h_r @ theta @ channels.h_t


def _unit(v, name, size):
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.shape != (size,):
        raise ContractError(f"{name} must have {size} entries, got {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ContractError(f"{name} must have unit norm")
    return v


def received_power(channels, theta, g, w, p_t):
    """``p_t * |g H w|**2`` with unit-norm combiner ``g`` and precoder ``w``."""
    g = _unit(g, "g", channels.n_r)
    w = _unit(w, "w", channels.n_t)
    h = compose_channel(channels, theta)
    return float(p_t * abs(g @ h @ w) ** 2)
