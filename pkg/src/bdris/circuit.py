"""Admittance and scattering matrices of a reconfigurable network built from
grounded reactances and reactance-plus-transmission-line interconnections.

Four model kinds are supported:

``GENERAL``
    arbitrary line lengths and attenuation.
``HALF_WAVE_LOSSY``
    every line length a multiple of half a wavelength; off-diagonal entries
    live on a circle of radius ``1 / (2 Z0 sinh(alpha l))``.
``LOSSLESS``
    zero attenuation, arbitrary lengths; Y is purely imaginary.
``HALF_WAVE_LOSSLESS``
    both of the above; the lumped-element model in disguise.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, RealizabilityError, SingularityError
from .units import db_per_m_to_np_per_m

log = logging.getLogger(__name__)

DEFAULT_WAVELENGTH_M = 0.1
DEFAULT_Z0_OHM = 50.0
HALF_WAVE_RTOL = 1e-9
DENOM_TINY = 1e-15
COND_WARN = 1e12


class TopologyFamily(str, enum.Enum):
    SINGLE = "single"
    TRIDIAGONAL = "tridiagonal"
    FULLY = "fully"
    CUSTOM = "custom"


class ModelKind(str, enum.Enum):
    GENERAL = "general"
    HALF_WAVE_LOSSY = "half_wave_lossy"
    LOSSLESS = "lossless"
    HALF_WAVE_LOSSLESS = "half_wave_lossless"

    @property
    def half_wave(self):
        return self in (ModelKind.HALF_WAVE_LOSSY, ModelKind.HALF_WAVE_LOSSLESS)

    @property
    def lossless(self):
        return self in (ModelKind.LOSSLESS, ModelKind.HALF_WAVE_LOSSLESS)


@dataclass(frozen=True, eq=False)
class CircuitTopology:
    """Interconnection graph; edges are ``(n, m)`` pairs with ``n < m``.

    ``lengths`` and ``half_wave_counts`` are aligned with ``edges``.
    """

    n: int
    edges: np.ndarray
    lengths: np.ndarray
    half_wave_counts: np.ndarray
    family: TopologyFamily = TopologyFamily.CUSTOM

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        edges = np.sort(edges, axis=1)
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        k = np.asarray(self.half_wave_counts, dtype=np.int64).reshape(-1)
        family = TopologyFamily(self.family)
        if self.n < 1:
            raise ContractError("topology needs at least one port")
        if len(lengths) != len(edges) or len(k) != len(edges):
            raise ContractError("lengths and half_wave_counts must align with edges")
        if len(edges) and (edges.min() < 0 or edges.max() >= self.n):
            raise ContractError("edge index out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ContractError("self-loops are not interconnections")
        if len({tuple(e) for e in edges}) != len(edges):
            raise ContractError("duplicate edge")
        if np.any(~(lengths > 0)):
            raise ContractError("every interconnection length must be positive")
        expected = _family_edges(family, self.n)
        if expected is not None and {tuple(e) for e in edges} != expected:
            raise ContractError(f"edge set does not match the {family.value} family")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "half_wave_counts", k)
        object.__setattr__(self, "family", family)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def component_count(self):
        """Tunable components: one per port to ground plus one per edge."""
        return self.n + self.n_edges

    def mask(self):
        """Boolean N x N pattern of nonzero admittance entries."""
        m = np.eye(self.n, dtype=bool)
        m[self.edges[:, 0], self.edges[:, 1]] = True
        m[self.edges[:, 1], self.edges[:, 0]] = True
        return m

    def with_lengths(self, lengths, half_wave_counts=None):
        k = self.half_wave_counts if half_wave_counts is None else half_wave_counts
        return CircuitTopology(self.n, self.edges, lengths, k, self.family)


def _family_edges(family, n):
    if family is TopologyFamily.SINGLE:
        return set()
    if family is TopologyFamily.TRIDIAGONAL:
        return {(m, m + 1) for m in range(n - 1)}
    if family is TopologyFamily.FULLY:
        return {(i, j) for i in range(n) for j in range(i + 1, n)}
    return None


def family_edges(family, n):
    """Edge list of a named family in row-major upper-triangular order."""
    fam = TopologyFamily(family)
    if fam is TopologyFamily.CUSTOM:
        raise ContractError("custom topologies have no implicit edge set")
    return np.array(sorted(_family_edges(fam, n)), dtype=np.intp).reshape(-1, 2)


def snap_half_wave(lengths, wavelength):
    """Round lengths to the nearest positive multiple of ``wavelength / 2``."""
    half = wavelength / 2.0
    lengths = np.asarray(lengths, dtype=float)
    k = np.maximum(np.rint(lengths / half), 1).astype(np.int64)
    snapped = k * half
    delta = snapped - lengths
    if np.any(np.abs(delta) > 1e-12):
        log.info("half-wave snapping moved lengths by up to %.3g m", np.abs(delta).max())
    return snapped, k, delta


def topology_from_positions(family, positions, wavelength=DEFAULT_WAVELENGTH_M, snap=True):
    """Topology whose line lengths equal the element-to-element distances.

    With ``snap`` the lengths are rounded to multiples of half a wavelength so
    the half-wave models apply; otherwise ``half_wave_counts`` holds the
    nearest count.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(positions)
    edges = family_edges(family, n)
    if len(edges):
        lengths = np.linalg.norm(positions[edges[:, 0]] - positions[edges[:, 1]], axis=1)
    else:
        lengths = np.zeros(0)
    snapped, k, _ = snap_half_wave(lengths, wavelength)
    return CircuitTopology(n, edges, snapped if snap else lengths, k, family)


@dataclass(frozen=True)
class LineParams:
    """Transmission-line constants. ``z0_ref_ohm`` is the S-parameter reference."""

    alpha_np_per_m: float = 0.0
    beta_rad_per_m: float = 2.0 * np.pi / DEFAULT_WAVELENGTH_M
    z0_line_ohm: float = DEFAULT_Z0_OHM
    z0_ref_ohm: float = DEFAULT_Z0_OHM

    def __post_init__(self):
        if not self.alpha_np_per_m >= 0:
            raise ContractError("attenuation must be non-negative")
        if not self.beta_rad_per_m > 0:
            raise ContractError("phase constant must be positive")
        if not (self.z0_line_ohm > 0 and self.z0_ref_ohm > 0):
            raise ContractError("impedances must be positive")

    @classmethod
    def from_wavelength(cls, wavelength=DEFAULT_WAVELENGTH_M, alpha_db_per_m=0.0,
                        z0=DEFAULT_Z0_OHM, z0_ref=None):
        return cls(
            alpha_np_per_m=db_per_m_to_np_per_m(alpha_db_per_m),
            beta_rad_per_m=2.0 * np.pi / wavelength,
            z0_line_ohm=z0,
            z0_ref_ohm=z0 if z0_ref is None else z0_ref,
        )

    @property
    def wavelength(self):
        return 2.0 * np.pi / self.beta_rad_per_m

    @property
    def gamma(self):
        return complex(self.alpha_np_per_m, self.beta_rad_per_m)


@dataclass(frozen=True, eq=False)
class ReactanceAssignment:
    """Grounded reactances per port and branch reactances per topology edge (ohms)."""

    x_ground: np.ndarray
    x_branch: np.ndarray

    def __post_init__(self):
        xg = np.asarray(self.x_ground, dtype=float).reshape(-1)
        xb = np.asarray(self.x_branch, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(xg)) and np.all(np.isfinite(xb))):
            raise ContractError("reactances must be finite real numbers")
        object.__setattr__(self, "x_ground", xg)
        object.__setattr__(self, "x_branch", xb)


@dataclass(frozen=True, eq=False)
class AdmittanceModel:
    kind: ModelKind
    line: LineParams
    topology: CircuitTopology

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        topo, line = self.topology, self.line
        if kind.lossless and line.alpha_np_per_m != 0:
            raise ContractError(f"{kind.value} model requires zero attenuation")
        if kind.half_wave and topo.n_edges:
            bl = line.beta_rad_per_m * topo.lengths
            target = np.pi * topo.half_wave_counts
            if np.any(topo.half_wave_counts < 1) or np.any(
                np.abs(bl - target) > HALF_WAVE_RTOL * target
            ):
                raise ContractError("half-wave model needs every beta*l equal to pi*K")

    @property
    def n(self):
        return self.topology.n

    def edge_radius(self):
        """Circle radius per edge (``inf`` for lossless lines)."""
        t = self.topology
        return circle_radius(self.line.alpha_np_per_m, t.lengths, self.line.z0_line_ohm)

    def edge_sign(self):
        """``(-1)**K`` per edge."""
        return np.where(self.topology.half_wave_counts % 2 == 0, 1.0, -1.0)

    def edge_cosh_alpha(self):
        return np.cosh(self.line.alpha_np_per_m * self.topology.lengths)


def offdiag_admittance_general(x_branch, length, line, ports=None):
    """Off-diagonal admittance of one reactance-plus-line interconnection."""
    gl = line.gamma * length
    ep, em = np.exp(gl), np.exp(-gl)
    denom = 1j * x_branch * (ep + em) + line.z0_line_ohm * (ep - em)
    if abs(denom) < DENOM_TINY:
        raise SingularityError("interconnection admittance is singular", ports)
    return -2.0 / denom


def diag_admittance_general(x_ground, incident, line, port=None):
    """Diagonal entry from the grounded reactance and incident ``(y_nm, length)`` pairs."""
    if x_ground == 0:
        raise SingularityError("grounded reactance is a short circuit", (port, port))
    y = 1.0 / (1j * x_ground)
    for y_nm, length in incident:
        gl = line.gamma * length
        y -= 0.5 * (np.exp(gl) + np.exp(-gl)) * y_nm
    return y


def circle_radius(alpha, length, z0):
    """Radius ``1 / (2 z0 sinh(alpha l))``; infinite for a lossless line."""
    al = np.asarray(alpha, dtype=float) * np.asarray(length, dtype=float)
    if np.any(al < 0):
        raise DomainError("alpha * length must be non-negative")
    with np.errstate(divide="ignore"):
        r = 1.0 / (2.0 * z0 * np.sinh(al))
    return float(r) if np.ndim(r) == 0 else r


def circle_center(r, k):
    """Center on the real axis: ``-(-1)**K * r``."""
    return -np.where(np.asarray(k) % 2 == 0, 1.0, -1.0) * r


def _check_nonzero(values, edges, what):
    bad = np.flatnonzero(np.abs(values) < DENOM_TINY)
    if len(bad):
        e = bad[0]
        raise SingularityError(f"{what} is singular", tuple(int(i) for i in edges[e]))


def assemble_admittance(model, x):
    """N x N admittance matrix for reactances ``x`` under ``model``."""
    topo, line, kind = model.topology, model.line, model.kind
    n = topo.n
    if x.x_ground.shape != (n,) or x.x_branch.shape != (topo.n_edges,):
        raise ContractError("reactance assignment does not match the topology")
    zero_ports = np.flatnonzero(x.x_ground == 0)
    if len(zero_ports):
        p = int(zero_ports[0])
        raise SingularityError("grounded reactance is a short circuit", (p, p))
    e0, e1 = topo.edges[:, 0], topo.edges[:, 1]
    xb, xg, length = x.x_branch, x.x_ground, topo.lengths
    z0 = line.z0_line_ohm

    if kind.lossless:
        if kind is ModelKind.HALF_WAVE_LOSSLESS:
            sign = model.edge_sign()
            _check_nonzero(xb, topo.edges, "interconnection admittance")
            b_off = sign / xb
            b_branch = -1.0 / xb
        else:
            bl = line.beta_rad_per_m * length
            den = xb * np.cos(bl) + z0 * np.sin(bl)
            _check_nonzero(den, topo.edges, "interconnection admittance")
            b_off = 1.0 / den
            den2 = xb + z0 * np.tan(bl)
            _check_nonzero(den2, topo.edges, "branch input admittance")
            b_branch = -1.0 / den2
        b = np.zeros((n, n))
        b[e0, e1] = b_off
        b[e1, e0] = b_off
        diag = -1.0 / xg
        np.add.at(diag, e0, b_branch)
        np.add.at(diag, e1, b_branch)
        b[np.arange(n), np.arange(n)] = diag
        return 1j * b

    y = np.zeros((n, n), dtype=complex)
    if kind is ModelKind.HALF_WAVE_LOSSY:
        al = line.alpha_np_per_m * length
        sign = model.edge_sign()
        den = 1j * xb * np.cosh(al) + z0 * np.sinh(al)
        _check_nonzero(den, topo.edges, "interconnection admittance")
        off = -sign / den
        branch = 1.0 / (1j * xb + z0 * np.tanh(al))
    else:
        gl = line.gamma * length
        ep, em = np.exp(gl), np.exp(-gl)
        den = 1j * xb * (ep + em) + z0 * (ep - em)
        _check_nonzero(den, topo.edges, "interconnection admittance")
        off = -2.0 / den
        branch = -0.5 * (ep + em) * off
    y[e0, e1] = off
    y[e1, e0] = off
    diag = 1.0 / (1j * xg)
    np.add.at(diag, e0, branch)
    np.add.at(diag, e1, branch)
    y[np.arange(n), np.arange(n)] = diag
    return y


def scattering_from_admittance(y, z0_ref=DEFAULT_Z0_OHM):
    """``(I + Z0 Y)^-1 (I - Z0 Y)`` via an LU solve with partial pivoting."""
    y = np.asarray(y, dtype=complex)
    eye = np.eye(len(y))
    m = eye + z0_ref * y
    try:
        theta = np.linalg.solve(m, eye - z0_ref * y)
    except np.linalg.LinAlgError:
        raise SingularityError("I + Z0*Y is singular") from None
    cond = np.linalg.cond(m)
    if not np.isfinite(cond):
        raise SingularityError("I + Z0*Y is singular")
    if cond > COND_WARN:
        warnings.warn(f"I + Z0*Y is ill-conditioned (cond={cond:.3g})", RuntimeWarning, stacklevel=2)
    return theta


def admittance_from_scattering(theta, z0_ref=DEFAULT_Z0_OHM):
    """Inverse of :func:`scattering_from_admittance`."""
    theta = np.asarray(theta, dtype=complex)
    eye = np.eye(len(theta))
    try:
        return np.linalg.solve(eye + theta, eye - theta) / z0_ref
    except np.linalg.LinAlgError:
        raise SingularityError("I + Theta is singular") from None


def dissipated_power(y, v):
    """Average power ``0.5 * v^T Re(Y) v*`` absorbed by a symmetric network."""
    y = np.asarray(y, dtype=complex)
    v = np.asarray(v, dtype=complex).reshape(-1)
    if np.max(np.abs(y - y.T), initial=0.0) > 1e-12 * max(1.0, np.abs(y).max(initial=0.0)):
        raise ContractError("dissipated_power needs a symmetric admittance matrix")
    g = y.real
    return float(0.5 * (v @ g @ v.conj()).real)


def extract_reactances(y_target, model, tol=1e-9):
    """Reactances that reproduce ``y_target`` under ``model``.

    The round trip must agree within ``tol`` siemens, or ``tol`` relative for
    entries larger than 1 S (huge susceptances lose digits through 1/X).
    """
    y = np.asarray(y_target, dtype=complex)
    topo, line, kind = model.topology, model.line, model.kind
    n = topo.n
    if y.shape != (n, n):
        raise ContractError(f"target must be {n}x{n}")
    mask = topo.mask()
    outside = np.abs(np.where(mask, 0.0, y))
    if outside.max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(outside), outside.shape)
        raise RealizabilityError("target has an entry where no interconnection exists", (int(i), int(j)))
    asym = np.abs(y - y.T)
    if asym.max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise RealizabilityError("target is not symmetric", (int(i), int(j)))
    if kind.lossless and np.abs(y.real).max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(np.abs(y.real)), y.shape)
        raise RealizabilityError("lossless model needs a purely imaginary target", (int(i), int(j)))

    e0, e1 = topo.edges[:, 0], topo.edges[:, 1]
    y_off = y[e0, e1]
    zero = np.flatnonzero(np.abs(y_off) == 0)
    if len(zero):
        raise RealizabilityError(
            "zero admittance on an interconnection needs an open circuit",
            tuple(int(i) for i in topo.edges[zero[0]]),
        )
    z0 = line.z0_line_ohm
    length = topo.lengths

    if kind.lossless:
        b_off = y_off.imag
        if kind is ModelKind.HALF_WAVE_LOSSLESS:
            c = model.edge_sign()
            x_branch = c / b_off
        else:
            bl = line.beta_rad_per_m * length
            c = np.cos(bl)
            quarter = np.flatnonzero(np.abs(c) < 1e-12)
            if len(quarter):
                raise SingularityError(
                    "quarter-wave line: branch reactance has no effect and cannot be recovered",
                    tuple(int(i) for i in topo.edges[quarter[0]]),
                )
            x_branch = 1.0 / (c * b_off) - z0 * np.tan(bl)
        acc = y.imag.diagonal().copy()
        np.add.at(acc, e0, c * b_off)
        np.add.at(acc, e1, c * b_off)
        q = 1j * acc
    else:
        if kind is ModelKind.HALF_WAVE_LOSSY:
            sign = model.edge_sign()
            ch = np.cosh(line.alpha_np_per_m * length)
            c = sign * ch
            # j X cosh + Z0 sinh = -(-1)^K / Y; the real part is fixed by the circle
            x_branch = (-sign / y_off).imag / ch
        else:
            gl = line.gamma * length
            sh = 0.5 * (np.exp(gl) - np.exp(-gl))
            c = 0.5 * (np.exp(gl) + np.exp(-gl))
            x_branch = ((-1.0 / y_off - z0 * sh) / c).imag
        acc = y.diagonal().copy()
        np.add.at(acc, e0, c * y_off)
        np.add.at(acc, e1, c * y_off)
        q = acc
    # q = 1/(j X_m)
    if np.any(np.abs(q.imag) == 0):
        p = int(np.flatnonzero(np.abs(q.imag) == 0)[0])
        raise RealizabilityError("grounded reactance would be an open circuit", (p, p))
    x_ground = -1.0 / q.imag
    try:
        x = ReactanceAssignment(x_ground, x_branch)
        y_back = assemble_admittance(model, x)
    except (ContractError, SingularityError) as exc:
        raise RealizabilityError(f"target is not realizable: {exc}") from None
    err = np.abs(y_back - y) / np.maximum(1.0, np.abs(y))
    if err.max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(err), err.shape)
        raise RealizabilityError(
            f"target entry is not reachable by the model (error {err[i, j]:.3g} S)",
            (int(i), int(j)),
        )
    return x


def build_model(kind, family, positions, wavelength=DEFAULT_WAVELENGTH_M,
                alpha_db_per_m=0.0, z0=DEFAULT_Z0_OHM, snap=None):
    """Model for elements at ``positions``; half-wave kinds snap lengths by default."""
    kind = ModelKind(kind)
    if snap is None:
        snap = kind.half_wave
    topo = topology_from_positions(family, positions, wavelength, snap=snap)
    line = LineParams.from_wavelength(wavelength, 0.0 if kind.lossless else alpha_db_per_m, z0)
    return AdmittanceModel(kind, line, topo)


# JSON form: row-major nested lists of [re, im] pairs


def matrix_to_json(m):
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def matrix_from_json(data):
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def vector_to_json(v):
    return [[float(c.real), float(c.imag)] for c in np.asarray(v, dtype=complex).reshape(-1)]


def vector_from_json(data):
    arr = np.asarray(data, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]
