"""Closed-form expected received powers and the gains built from them.

All powers assume unit transmit power, SISO, a blocked direct link and a
lossless surface. Localized formulas take scalar distances, distributed
ones per-element distance vectors.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geometry import centroid_distances, element_distances

PI2_16 = np.pi**2 / 16.0
GAIN_LOC_LIMIT = 16.0 / np.pi**2


class Architecture(str, enum.Enum):
    LOC_SC = "loc-sc"
    LOC_FC = "loc-fc"
    DIS_SC = "dis-sc"
    DIS_FC = "dis-fc"

    @property
    def localized(self):
        return self in (Architecture.LOC_SC, Architecture.LOC_FC)

    @property
    def fully_connected(self):
        return self in (Architecture.LOC_FC, Architecture.DIS_FC)


@dataclass(frozen=True, eq=False)
class ScalingInputs:
    n: int
    a: float
    c0: float
    d_r: float | None = None
    d_t: float | None = None
    dvec_r: np.ndarray | None = None
    dvec_t: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        for name in ("d_r", "d_t"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("dvec_r", "dvec_t"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(-1)
                if len(v) != self.n or np.any(~(v > 0)):
                    raise DomainError(f"{name} must hold {self.n} positive distances")
                object.__setattr__(self, name, v)

    def _loc(self):
        if self.d_r is None or self.d_t is None:
            raise DomainError("localized distances d_r, d_t are not set")
        return self.d_r, self.d_t

    def _dis(self):
        if self.dvec_r is None or self.dvec_t is None:
            raise DomainError("distributed distances dvec_r, dvec_t are not set")
        return self.dvec_r, self.dvec_t


def scaling_inputs(localized=None, distributed=None):
    """Build :class:`ScalingInputs` from a localized and/or distributed scenario."""
    ref = localized if localized is not None else distributed
    kw = dict(n=ref.n, a=ref.pathloss_exponent, c0=ref.c0)
    if localized is not None:
        kw["d_r"], kw["d_t"] = centroid_distances(localized)
    if distributed is not None:
        if distributed.n != ref.n:
            raise DomainError("localized and distributed scenarios differ in N")
        kw["dvec_r"], kw["dvec_t"], _ = element_distances(distributed)
    return ScalingInputs(**kw)


def generalized_mean(xi, p):
    """Power mean ``(sum(xi**p) / N) ** (1/p)``."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if p == 0:
        raise DomainError("generalized mean exponent must be nonzero")
    if xi.size == 0 or np.any(~(xi > 0)):
        raise DomainError("generalized mean needs positive entries")
    return float(np.mean(xi**p) ** (1.0 / p))


def prop1_bounds(xi, p):
    """``(min(xi), M_{-p}(xi), N**(1/p) * min(xi))`` with strict ordering checked.

    Repeated entries can make the lower bound tight; that case only warns.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if not p > 0:
        raise DomainError("p must be positive")
    lo = float(xi.min())
    val = generalized_mean(xi, -p)
    hi = float(len(xi) ** (1.0 / p) * lo)
    if not lo < val < hi:
        warnings.warn(
            f"generalized-mean bounds not strict: {lo!r} < {val!r} < {hi!r}",
            RuntimeWarning,
            stacklevel=2,
        )
    return lo, val, hi


def expected_power_loc_sc(inp):
    d_r, d_t = inp._loc()
    n = inp.n
    return (n + PI2_16 * n * (n - 1)) * inp.c0**2 * d_r ** (-inp.a) * d_t ** (-inp.a)


def expected_power_loc_fc(inp):
    d_r, d_t = inp._loc()
    return inp.n**2 * inp.c0**2 * d_r ** (-inp.a) * d_t ** (-inp.a)


def expected_power_dis_sc(inp):
    d_r, d_t = inp._dis()
    prod = d_r * d_t
    diag = np.sum(prod ** (-inp.a))
    half = prod ** (-inp.a / 2.0)
    cross = np.outer(half, half)
    np.fill_diagonal(cross, 0.0)
    return float(inp.c0**2 * (diag + PI2_16 * cross.sum()))


def expected_power_dis_fc(inp):
    d_r, d_t = inp._dis()
    return float(inp.c0**2 * np.sum(d_r ** (-inp.a)) * np.sum(d_t ** (-inp.a)))


def expected_power(inp, architecture):
    arch = Architecture(architecture)
    return {
        Architecture.LOC_SC: expected_power_loc_sc,
        Architecture.LOC_FC: expected_power_loc_fc,
        Architecture.DIS_SC: expected_power_dis_sc,
        Architecture.DIS_FC: expected_power_dis_fc,
    }[arch](inp)


def expected_power_los(inp, architecture):
    """Expected power when every entry has deterministic magnitude and random phase."""
    arch = Architecture(architecture)
    if arch is Architecture.LOC_SC:
        return expected_power_loc_fc(inp)
    if arch is Architecture.DIS_SC:
        d_r, d_t = inp._dis()
        return float(inp.c0**2 * np.sum((d_r * d_t) ** (-inp.a / 2.0)) ** 2)
    return expected_power(inp, arch)


def gain_loc(n):
    """Fully- over single-connected localized gain; in ``[1, 16/pi**2)``."""
    n = np.asarray(n, dtype=float)
    out = n / (1.0 + PI2_16 * (n - 1.0))
    return float(out) if out.ndim == 0 else out


def gain_dis(inp):
    return expected_power_dis_fc(inp) / expected_power_dis_sc(inp)


def gain_dis_lower_bounds(inp):
    """Two lower bounds on the distributed gain, loosest last.

    The first is the generalized-mean ratio; the second replaces each mean by
    its min-based bound, which only depends on the closest elements.
    """
    d_r, d_t = inp._dis()
    a = inp.a
    m_prod = generalized_mean(d_r * d_t, -a / 2.0)
    m_r = generalized_mean(d_r, -a)
    m_t = generalized_mean(d_t, -a)
    mean_bound = (m_prod / (m_r * m_t)) ** a
    # min < M_{-a/2}(dR*dT) and M_{-a}(d) < N**(1/a) * min(d)
    lo_prod, _, _ = _bounds_quiet(d_r * d_t, a / 2.0)
    _, _, hi_r = _bounds_quiet(d_r, a)
    _, _, hi_t = _bounds_quiet(d_t, a)
    min_bound = (lo_prod / (hi_r * hi_t)) ** a
    return float(mean_bound), float(min_bound)


def _bounds_quiet(xi, p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return prop1_bounds(xi, p)


@dataclass(frozen=True)
class SCGain:
    exact: float
    approx: float
    lower: float
    upper: float
    sufficient: bool
    necessary: bool


@dataclass(frozen=True)
class FCGain:
    exact: float
    sufficient: bool
    necessary: bool


def gain_sc(inp):
    """Distributed over localized single-connected gain, with its approximation.

    ``sufficient`` and ``necessary`` are the distance conditions for the
    approximation to exceed one.
    """
    d_r, d_t = inp._loc()
    dv_r, dv_t = inp._dis()
    a, n = inp.a, inp.n
    exact = expected_power_dis_sc(inp) / expected_power_loc_sc(inp)
    prod = dv_r * dv_t
    approx = (d_r * d_t / generalized_mean(prod, -a / 2.0)) ** a
    m = prod.min()
    return SCGain(
        exact=float(exact),
        approx=float(approx),
        lower=float(PI2_16 * approx),
        upper=float(approx / PI2_16),
        sufficient=bool(d_r * d_t > n ** (2.0 / a) * m),
        necessary=bool(d_r * d_t > m),
    )


def gain_fc(inp):
    d_r, d_t = inp._loc()
    dv_r, dv_t = inp._dis()
    a, n = inp.a, inp.n
    exact = expected_power_dis_fc(inp) / expected_power_loc_fc(inp)
    m = dv_r.min() * dv_t.min()
    return FCGain(
        exact=float(exact),
        sufficient=bool(d_r * d_t > n ** (2.0 / a) * m),
        necessary=bool(d_r * d_t > m),
    )
