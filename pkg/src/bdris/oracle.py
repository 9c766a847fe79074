"""Brute-force references used by the test suite.

Nothing in the production path calls into this module. Each routine reaches
its answer by a different route from the code it checks:

* ``nodal_port_admittance`` stamps the physical circuit (grounded reactors,
  series reactors, transmission lines as ABCD two-ports) into a modified nodal
  system and reduces it to the ports by a Schur complement.
* ``grid_search_power`` scans the physical reactances on a grid.
* ``monte_carlo_expectation`` samples fading and applies the per-realization
  optimum directly.
"""

import numpy as np
from scipy.optimize import minimize

from .circuit import AdmittanceModel, ReactanceAssignment, assemble_admittance
from .errors import ContractError, DomainError, SingularityError
from .geometry import FadingKind, centroid_distances, element_distances, path_gain
from .scaling import Architecture

MAX_NODAL_PORTS = 8
MAX_GRID_PARAMS = 3
MAX_GRID_POINTS = 10**7


# --------------------------------------------------------------------------
# nodal analysis


def _line_abcd(gamma, length, z0):
    gl = gamma * length
    ch, sh = np.cosh(gl), np.sinh(gl)
    return ch, z0 * sh, sh / z0, ch


def _port_admittance_for(topology, reactances, line, near_end):
    """Full port admittance matrix with each edge's reactor at ``near_end[e]``.

    Unknowns: port voltages, one internal node voltage per edge (between the
    reactor and the line), and the two terminal currents of each line. The
    line enters through its ABCD relations, which stay finite for half-wave
    lines where the Y-parameters of the bare line blow up.
    """
    n = topology.n
    ne = topology.n_edges
    size = n + ne + 2 * ne
    a = np.zeros((size, size), dtype=complex)

    for p in range(n):
        xg = reactances.x_ground[p]
        if xg == 0:
            raise SingularityError("grounded reactor is a short", (p, p))
        a[p, p] += 1.0 / (1j * xg)

    for e, (i, j) in enumerate(topology.edges):
        near, far = (i, j) if near_end[e] == i else (j, i)
        node = n + e
        i1 = n + ne + 2 * e
        i2 = i1 + 1
        xb = reactances.x_branch[e]
        if xb == 0:
            raise SingularityError("series reactor of zero value", (int(i), int(j)))
        y = 1.0 / (1j * xb)
        # series reactor between the near port and the internal node
        a[near, near] += y
        a[near, node] -= y
        a[node, near] -= y
        a[node, node] += y
        # line: I1 leaves the internal node, I2 arrives at the far port
        a[node, i1] += 1.0
        a[far, i2] -= 1.0
        ca, cb, cc, cd = _line_abcd(line.gamma, topology.lengths[e], line.z0_line_ohm)
        # V_node - A V_far - B I2 = 0
        a[i1, node] += 1.0
        a[i1, far] -= ca
        a[i1, i2] -= cb
        # I1 - C V_far - D I2 = 0
        a[i2, i1] += 1.0
        a[i2, far] -= cc
        a[i2, i2] -= cd

    p_blk = a[:n, :n]
    q_blk = a[:n, n:]
    r_blk = a[n:, :n]
    s_blk = a[n:, n:]
    if ne == 0:
        return p_blk
    try:
        lu_rhs = np.linalg.solve(s_blk, r_blk)
    except np.linalg.LinAlgError:
        raise SingularityError("internal nodal block is singular") from None
    return p_blk - q_blk @ lu_rhs


def nodal_port_admittance(topology, reactances, line, orientation="driven"):
    """Port admittance matrix of the reconfigurable network by nodal analysis.

    ``orientation="driven"`` places each series reactor next to the port being
    driven when that column is measured, which is the arrangement the
    closed-form circuit model describes. ``"fixed"`` keeps one physical
    network with every reactor at the lower-index port; its diagonal differs
    from the closed form whenever ``sinh(gamma l)`` is nonzero.
    """
    n = topology.n
    if n > MAX_NODAL_PORTS:
        raise ContractError(f"nodal oracle is limited to {MAX_NODAL_PORTS} ports")
    if reactances.x_ground.shape != (n,) or reactances.x_branch.shape != (topology.n_edges,):
        raise ContractError("reactance assignment does not match the topology")
    edges = topology.edges
    if orientation == "fixed":
        return _port_admittance_for(topology, reactances, line, edges[:, 0])
    if orientation != "driven":
        raise ValueError(f"unknown orientation {orientation!r}")
    y = np.zeros((n, n), dtype=complex)
    for m in range(n):
        near = np.where(edges[:, 1] == m, edges[:, 1], edges[:, 0])
        y[:, m] = _port_admittance_for(topology, reactances, line, near)[:, m]
    return y


# --------------------------------------------------------------------------
# grid search


def _reactance_axis(points, z0):
    # offset grid in angle: never hits X = 0 or X = +-inf
    phi = -0.5 * np.pi + (np.arange(points) + 0.5) * np.pi / points
    return z0 * np.tan(phi)


def _powers_for(y_batch, channels, z0, p_t):
    n = channels.n
    eye = np.eye(n)
    m_plus = eye + z0 * y_batch
    m_minus = eye - z0 * y_batch
    theta = np.linalg.solve(m_plus, m_minus)
    h = channels.h_rt + channels.h_r @ theta @ channels.h_t
    if channels.n_t == 1 and channels.n_r == 1:
        return p_t * np.abs(h[..., 0, 0]) ** 2
    return p_t * np.linalg.norm(h, ord=2, axis=(-2, -1)) ** 2


def grid_search_power(channels, model, points_per_axis=100, polish=True, p_t=1.0):
    """Best received power over a grid of physical reactances.

    Every tunable reactance (grounded and series) is scanned on
    ``X = z0 tan(phi)`` with ``phi`` evenly spaced in ``(-pi/2, pi/2)``.
    The best cell is optionally polished with Nelder-Mead in ``phi``.
    Precoder and combiner are the dominant singular pair at each point.
    """
    if not isinstance(model, AdmittanceModel):
        raise ContractError("grid search needs an AdmittanceModel")
    topo = model.topology
    n_par = topo.n + topo.n_edges
    if n_par > MAX_GRID_PARAMS:
        raise ContractError(f"grid search handles at most {MAX_GRID_PARAMS} parameters")
    if points_per_axis ** n_par > MAX_GRID_POINTS:
        raise ContractError(f"grid of {points_per_axis}^{n_par} points exceeds the budget")
    n = topo.n
    z0_line = model.line.z0_line_ohm
    z0 = model.line.z0_ref_ohm
    axis = _reactance_axis(points_per_axis, z0_line)

    # Y splits into grounded-reactor diagonals plus a part that only depends
    # on the series reactors, so the series part is assembled once per value
    ones = np.ones(n)
    series = []
    for xb in axis:
        x = ReactanceAssignment(ones, np.full(topo.n_edges, xb))
        series.append(assemble_admittance(model, x) - np.diag(1.0 / (1j * ones)))
    series = np.array(series) if topo.n_edges else np.zeros((1, n, n), dtype=complex)

    grids = np.meshgrid(*([np.arange(points_per_axis)] * n_par), indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1)
    best_val, best_idx = -np.inf, None
    chunk = 200_000
    for start in range(0, len(idx), chunk):
        block = idx[start : start + chunk]
        y = series[block[:, n]] if topo.n_edges else np.repeat(series, len(block), axis=0)
        y = y.copy()
        diag = 1.0 / (1j * axis[block[:, :n]])
        y[:, np.arange(n), np.arange(n)] += diag
        vals = _powers_for(y, channels, z0, p_t)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_idx = float(vals[k]), block[k]
    if not polish:
        return best_val

    def neg(phi):
        x = z0_line * np.tan(phi)
        try:
            y = assemble_admittance(model, ReactanceAssignment(x[:n], np.full(topo.n_edges, x[n]) if topo.n_edges else []))
        except (SingularityError, ContractError):
            return np.inf
        return -float(_powers_for(y[None], channels, z0, p_t)[0])

    phi0 = np.arctan(axis[best_idx] / z0_line)
    res = minimize(neg, phi0, method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-16 * max(best_val, 1e-300), maxiter=4000))
    return max(best_val, -float(res.fun))


# --------------------------------------------------------------------------
# Monte Carlo


def _gains_for(scenario, arch):
    c0_db, a = scenario.c0_db, scenario.pathloss_exponent
    if arch.localized:
        d_r, d_t = centroid_distances(scenario)
        return (np.full(scenario.n, path_gain(d_r, c0_db, a)),
                np.full(scenario.n, path_gain(d_t, c0_db, a)))
    d_r, d_t, _ = element_distances(scenario)
    return path_gain(d_r, c0_db, a), path_gain(d_t, c0_db, a)


def monte_carlo_expectation(scenario, architecture, fading_kind, trials, seed=0, p_t=1.0):
    """Sample mean and standard error of the per-realization optimal power.

    Single-connected surfaces co-phase every path, giving
    ``(sum |h_R,n| |h_T,n|)**2``; fully-connected surfaces reach
    ``|h_R|**2 |h_T|**2``. The direct link is taken as blocked.
    """
    if trials < 1000:
        raise DomainError("Monte Carlo needs at least 1000 trials")
    arch = Architecture(architecture)
    kind = FadingKind(fading_kind)
    rho_r, rho_t = _gains_for(scenario, arch)
    n = scenario.n
    rng = np.random.default_rng(seed)
    samples = np.empty(trials)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        if kind is FadingKind.RAYLEIGH:
            # |CN(0, rho)|^2 is exponential with mean rho
            pr = rng.exponential(1.0, (m, n)) * rho_r
            pt = rng.exponential(1.0, (m, n)) * rho_t
        else:
            pr = np.broadcast_to(rho_r, (m, n))
            pt = np.broadcast_to(rho_t, (m, n))
        if arch.fully_connected:
            samples[start : start + m] = pr.sum(axis=1) * pt.sum(axis=1)
        else:
            samples[start : start + m] = np.sum(np.sqrt(pr * pt), axis=1) ** 2
    samples *= p_t
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(trials))
