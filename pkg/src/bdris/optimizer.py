"""Received-power maximization by alternating optimization.

The surface block is solved over an unconstrained real matrix ``A`` (the
susceptance matrix ``B`` in the lossless case) with BFGS; the precoder and
combiner block is solved exactly by the dominant singular pair. For the
half-wave lossy model each off-diagonal admittance is parametrized as

    Y_nm = (-1)^K (r / s - r) + j A_nm / s,   s = sqrt(A_nm^2 / r^2 + 1),

which sweeps the low-loss half of its circle, and the diagonal as

    Y_mm = sum_n cosh(alpha l_nm) |Re Y_nm| + j A_mm.

With ``r = inf`` both reduce to ``Y = jA``, so lossless problems run through
exactly the same code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .circuit import (
    ModelKind,
    ReactanceAssignment,
    TopologyFamily,
    extract_reactances,
    matrix_from_json,
    matrix_to_json,
    scattering_from_admittance,
    vector_from_json,
    vector_to_json,
)
from .errors import ContractError, OptimizationError, SingularityError
from .geometry import compose_channel, received_power, substream

INIT_SPREAD_S = 0.02
ALIGN_PHASES = 16
BOUND_RTOL = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    max_outer_iters: int = 50
    outer_tol: float = 1e-6
    qn_max_iters: int = 500
    qn_grad_tol: float = 1e-8
    fd_step: float = 1e-6
    restarts: int = 1
    rng_seed: int = 0
    init: str = "aligned"

    def __post_init__(self):
        if not (self.outer_tol > 0 and self.qn_grad_tol > 0 and self.fd_step > 0):
            raise ContractError("tolerances must be positive")
        if min(self.max_outer_iters, self.qn_max_iters, self.restarts) < 1:
            raise ContractError("iteration and restart counts must be >= 1")
        if self.init not in ("aligned", "zero"):
            raise ContractError(f"unknown initialization {self.init!r}")


# --------------------------------------------------------------------------
# effective SISO channel and plain objectives


def effective_siso(channels, g, w):
    """``(g H_RT w, g H_R, H_T w)`` for fixed combiner and precoder."""
    g = np.asarray(g, dtype=complex).reshape(-1)
    w = np.asarray(w, dtype=complex).reshape(-1)
    return complex(g @ channels.h_rt @ w), g @ channels.h_r, channels.h_t @ w


def _siso_power(y, eff, p_t, z0):
    h_rt, h_r, h_t = eff
    theta = scattering_from_admittance(y, z0)
    return float(p_t * abs(h_rt + h_r @ theta @ h_t) ** 2)


def lossless_inner_objective(b, eff, p_t, z0=50.0):
    """Power for susceptance matrix ``b`` (``Y = jB``)."""
    b = np.asarray(b, dtype=float)
    if np.max(np.abs(b - b.T), initial=0.0) > 0:
        raise ContractError("susceptance matrix must be symmetric")
    return _siso_power(1j * b, eff, p_t, z0)


def admittance_from_auxiliary(a, model):
    """Map the auxiliary real matrix ``a`` to the admittance matrix."""
    topo = model.topology
    a = np.asarray(a, dtype=float)
    if a.shape != (topo.n, topo.n) or np.max(np.abs(a - a.T), initial=0.0) > 0:
        raise ContractError("auxiliary matrix must be symmetric N x N")
    if np.any(np.where(topo.mask(), 0.0, a) != 0):
        raise ContractError("auxiliary matrix has entries outside the topology")
    e0, e1 = topo.edges[:, 0], topo.edges[:, 1]
    y_off, abs_re, _, _ = _offdiag_map(a[e0, e1], *_edge_consts(model))
    return _assemble_from_parts(topo.n, e0, e1, y_off, abs_re, model.edge_cosh_alpha(), a.diagonal())


def lossy_inner_objective(a, eff, model, p_t):
    """Power for auxiliary matrix ``a`` under the half-wave lossy model."""
    return _siso_power(admittance_from_auxiliary(a, model), eff, p_t, model.line.z0_ref_ohm)


def _edge_consts(model):
    if model.kind not in (ModelKind.HALF_WAVE_LOSSY, ModelKind.LOSSLESS, ModelKind.HALF_WAVE_LOSSLESS):
        raise ContractError(f"cannot optimize the {model.kind.value} model directly")
    if model.kind.lossless:
        r = np.full(model.topology.n_edges, np.inf)
    else:
        r = np.atleast_1d(model.edge_radius()).astype(float)
    return r, model.edge_sign()


def _offdiag_map(a_off, r, sign):
    """Off-diagonal admittance, ``|Re|``, and their derivatives in ``a``."""
    t = a_off / r
    s = np.sqrt(t * t + 1.0)
    # r/s - r rewritten without cancellation: -a*t / (s*(s+1))
    abs_re = a_off * t / (s * (s + 1.0))
    y_off = -sign * abs_re + 1j * (a_off / s)
    s3 = s * s * s
    dy = (-sign * t + 1j) / s3
    dabs = t / s3
    return y_off, abs_re, dy, dabs


def _assemble_from_parts(n, e0, e1, y_off, abs_re, cosh_al, a_diag):
    y = np.zeros((n, n), dtype=complex)
    y[e0, e1] = y_off
    y[e1, e0] = y_off
    re_diag = np.zeros(n)
    np.add.at(re_diag, e0, cosh_al * abs_re)
    np.add.at(re_diag, e1, cosh_al * abs_re)
    y[np.arange(n), np.arange(n)] = re_diag + 1j * np.asarray(a_diag, dtype=float)
    return y


def params_to_admittance(x, model):
    """Admittance matrix for the flat parameter vector ``x = z0_ref * a``."""
    topo = model.topology
    a = np.asarray(x, dtype=float) / model.line.z0_ref_ohm
    if a.shape != (topo.n + topo.n_edges,):
        raise ContractError("parameter vector does not match the topology")
    y_off, abs_re, _, _ = _offdiag_map(a[topo.n :], *_edge_consts(model))
    return _assemble_from_parts(topo.n, topo.edges[:, 0], topo.edges[:, 1], y_off, abs_re,
                                model.edge_cosh_alpha(), a[: topo.n])


class InnerProblem:
    """Surface subproblem for fixed precoder/combiner as a flat smooth function.

    Parameters are ``x = z0_ref * [A_11..A_NN, A_e for each edge]`` and the
    value is the received power divided by ``scale``, a passive-surface upper
    bound, so values lie in ``[0, 1]``.
    """

    def __init__(self, eff, model, p_t, backend=None):
        self.h_rt, self.h_r, self.h_t = complex(eff[0]), np.asarray(eff[1], complex), np.asarray(eff[2], complex)
        self.model = model
        topo = model.topology
        self.n = topo.n
        self.e0, self.e1 = topo.edges[:, 0], topo.edges[:, 1]
        self.r, self.sign = _edge_consts(model)
        self.cosh_al = model.edge_cosh_alpha()
        self.z0 = model.line.z0_ref_ohm
        self.p_t = p_t
        self.tridiagonal = topo.family in (TopologyFamily.TRIDIAGONAL, TopologyFamily.SINGLE) or (
            topo.n_edges == topo.n - 1 and np.all(self.e1 - self.e0 == 1) and np.all(self.e0 == np.arange(topo.n - 1))
        )
        self.kern = kernels if backend is None else kernels.get_backend(backend)
        bound = abs(self.h_rt) + np.linalg.norm(self.h_r) * np.linalg.norm(self.h_t)
        self.scale = p_t * bound**2 if bound > 0 else 1.0
        self.c = self.h_rt - self.h_r @ self.h_t

    @property
    def size(self):
        return self.n + len(self.e0)

    def split(self, x):
        a = np.asarray(x, dtype=float) / self.z0
        return a[: self.n], a[self.n :]

    def admittance(self, x):
        return params_to_admittance(x, self.model)

    def auxiliary(self, x):
        a_d, a_e = self.split(x)
        a = np.diag(a_d)
        a[self.e0, self.e1] = a_e
        a[self.e1, self.e0] = a_e
        return a

    def _solve(self, x):
        a_d, a_e = self.split(x)
        y_off, abs_re, dy, dabs = _offdiag_map(a_e, self.r, self.sign)
        re_diag = np.zeros(self.n)
        np.add.at(re_diag, self.e0, self.cosh_al * abs_re)
        np.add.at(re_diag, self.e1, self.cosh_al * abs_re)
        yd = re_diag + 1j * a_d
        z0 = self.z0
        if self.tridiagonal:
            d = np.ascontiguousarray(1.0 + z0 * yd)
            e = np.ascontiguousarray(z0 * y_off)
            try:
                q, gd, go = self.kern.tridiag_bilinear(d, e, self.h_r, self.h_t)
            except ZeroDivisionError as exc:
                raise SingularityError(f"I + Z0*Y is singular ({exc})") from None
        else:
            m = np.eye(self.n, dtype=complex)
            m[np.arange(self.n), np.arange(self.n)] += z0 * yd
            m[self.e0, self.e1] = z0 * y_off
            m[self.e1, self.e0] = z0 * y_off
            try:
                uv = np.linalg.solve(m, np.stack([self.h_r, self.h_t], axis=1))
            except np.linalg.LinAlgError:
                raise SingularityError("I + Z0*Y is singular") from None
            u, v = uv[:, 0], uv[:, 1]
            q = self.h_r @ v
            gd = u * v
            go = u[self.e0] * v[self.e1] + u[self.e1] * v[self.e0]
        s = self.c + 2.0 * q
        return s, gd, go, dy, dabs

    def value(self, x):
        s = self._solve(x)[0]
        return float(self.p_t * (s.real**2 + s.imag**2) / self.scale)

    def value_and_grad(self, x):
        s, gd, go, dy, dabs = self._solve(x)
        val = float(self.p_t * (s.real**2 + s.imag**2) / self.scale)
        # ds/dY_kl = -2 z0 u_k v_l; x = z0 * a absorbs the z0
        ds_d = -2.0j * gd
        ds_e = -2.0 * (go * dy + (gd[self.e0] + gd[self.e1]) * self.cosh_al * dabs)
        coef = 2.0 * self.p_t / self.scale
        sc = np.conj(s)
        grad = np.concatenate([(sc * ds_d).real, (sc * ds_e).real]) * coef
        return val, grad

    def power(self, x):
        return self.value(x) * self.scale


def aligned_start(eff, model, score=None):
    """Starting parameters from the lossless beam-alignment condition.

    A lossless surface reaches the passive bound exactly when
    ``Theta h_T = lam conj(h_R)`` with ``|lam| = |h_T| / |h_R|`` and the phase
    of ``lam`` matching the direct path. With ``K = z0 B`` that condition reads
    ``K (u + h_T) = -j (h_T - u)``, which is linear in the free entries of
    ``K``; it is solved in least squares over the topology's pattern. Lossy
    models start from the same susceptances mapped onto their circles.

    Without a direct path the phase of ``lam`` is free. A lossless model takes
    the first phase that solves exactly; otherwise every phase on a grid is
    tried and ``score`` (default: smallest residual, then smallest norm) picks.
    Returns ``None`` for a lossy model when no candidate fits inside the
    circles; clipped points sit on a near-zero plateau and make poor starts.
    """
    h_rt, h_r, h_t = complex(eff[0]), np.asarray(eff[1], complex), np.asarray(eff[2], complex)
    topo = model.topology
    n = topo.n
    e0, e1 = topo.edges[:, 0], topo.edges[:, 1]
    nr, nt = np.linalg.norm(h_r), np.linalg.norm(h_t)
    if nr == 0 or nt == 0:
        return np.zeros(n + len(e0))
    if h_rt != 0:
        phases = [np.angle(h_rt)]
    else:
        phases = np.arange(ALIGN_PHASES) * (2.0 * np.pi / ALIGN_PHASES)
    k = np.arange(len(e0)) + n
    # a lossy kind with zero attenuation has infinite circles and is lossless
    lossless = model.kind.lossless or bool(np.all(np.isinf(model.edge_radius())))
    best = None
    for psi in phases:
        u = (nt / nr) * np.exp(1j * psi) * h_r.conj()
        p = u + h_t
        rhs = -1j * (h_t - u)
        cols = np.zeros((n, n + len(e0)), dtype=complex)
        cols[np.arange(n), np.arange(n)] = p
        cols[e0, k] = p[e1]
        cols[e1, k] = p[e0]
        lhs = np.vstack([cols.real, cols.imag])
        b = np.concatenate([rhs.real, rhs.imag])
        x = np.linalg.lstsq(lhs, b, rcond=None)[0]
        res = np.linalg.norm(lhs @ x - b)
        exact = res <= 1e-9 * np.linalg.norm(b)
        if not lossless:
            x = _onto_circles(x, model)
            if x is None:
                continue
        if score is not None:
            val = _safe(score, x)
            key = (-np.inf if val is None else -val,)
        else:
            key = (not exact, res, np.linalg.norm(x))
        if best is None or key < best[0]:
            best = (key, x)
        if exact and lossless:
            break
    return None if best is None else best[1]


def _onto_circles(x, model):
    # invert Im Y = a / sqrt(a^2 / r^2 + 1) on each edge, clipped inside the circle
    n = model.topology.n
    r = np.asarray(model.edge_radius(), dtype=float) * model.line.z0_ref_ohm
    b_e = x[n:]
    if np.any(np.abs(b_e) >= r):
        return None
    return np.concatenate([x[:n], b_e / np.sqrt(1.0 - (b_e / r) ** 2)])


# --------------------------------------------------------------------------
# quasi-Newton


@dataclass
class QNResult:
    x: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool = False
    inv_hessian: np.ndarray | None = field(default=None, repr=False)


def central_difference(fun, x, step):
    """Central finite-difference gradient with step ``step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def _safe(fun, x):
    try:
        out = fun(x)
    except (SingularityError, ZeroDivisionError, np.linalg.LinAlgError, FloatingPointError):
        return None
    val = out[0] if isinstance(out, tuple) else out
    return out if np.isfinite(val) else None


def quasi_newton_maximize(fun, x0, config=None, grad=None, inv_hessian=None):
    """Maximize ``fun`` with BFGS and Armijo backtracking.

    ``grad`` may be ``True`` (``fun`` returns ``(f, g)``), a callable, or
    ``None`` for central differences. Internally the negative is minimized.
    Returns the best point seen; ``line_search_failed`` flags a stall.
    Passing a previous result's ``inv_hessian`` continues that run.
    """
    cfg = config or OptimizerConfig()
    if grad is True:
        fg = fun
    elif callable(grad):
        def fg(x):
            return fun(x), grad(x)
    else:
        def fg(x):
            return fun(x), central_difference(fun, x, cfg.fd_step)

    x = np.array(x0, dtype=float)
    out = _safe(fg, x)
    if out is None:
        raise OptimizationError("objective is not finite at the starting point")
    f, g = out
    phi, dphi = -f, -np.asarray(g, dtype=float)
    n = len(x)
    fresh = inv_hessian is None
    h_inv = np.eye(n) if fresh else np.array(inv_hessian, dtype=float)
    c1 = 1e-4
    it = 0
    failed = False
    gnorm = np.max(np.abs(dphi), initial=0.0)
    while gnorm > cfg.qn_grad_tol and it < cfg.qn_max_iters:
        p = -h_inv @ dphi
        slope = dphi @ p
        if not slope < 0:
            h_inv = np.eye(n)
            fresh = True
            p = -dphi
            slope = dphi @ p
        step = 1.0
        accepted = None
        for _ in range(51):
            x_new = x + step * p
            out = _safe(fg, x_new)
            if out is not None and -out[0] <= phi + c1 * step * slope:
                accepted = out
                break
            step *= 0.5
        if accepted is None:
            if not fresh:
                h_inv = np.eye(n)
                fresh = True
                continue
            failed = True
            break
        f_new, g_new = accepted
        s_vec = x_new - x
        y_vec = -np.asarray(g_new, dtype=float) - dphi
        sy = s_vec @ y_vec
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            if fresh:
                h_inv *= sy / (y_vec @ y_vec)
            rho = 1.0 / sy
            hy = h_inv @ y_vec
            h_inv += (rho * rho * (sy + y_vec @ hy)) * np.outer(s_vec, s_vec) - rho * (
                np.outer(hy, s_vec) + np.outer(s_vec, hy)
            )
            fresh = False
        x, phi, dphi = x_new, -f_new, -np.asarray(g_new, dtype=float)
        gnorm = np.max(np.abs(dphi), initial=0.0)
        it += 1
    return QNResult(x=x, f=-phi, grad_norm=float(gnorm), iterations=it,
                    converged=bool(gnorm <= cfg.qn_grad_tol), line_search_failed=failed,
                    inv_hessian=h_inv)


# --------------------------------------------------------------------------
# precoder / combiner step


def update_g_w(channels, theta):
    """Dominant left/right singular vectors of the end-to-end channel.

    ``g`` is returned as the conjugated left vector (a row combiner) and the
    phase is fixed so the first nonzero entry of ``w`` is real positive.
    """
    h = compose_channel(channels, theta)
    u, sv, vh = np.linalg.svd(h)
    if not sv[0] > 0:
        raise OptimizationError("end-to-end channel is zero")
    g = u[:, 0].conj()
    w = vh[0].conj()
    nz = np.flatnonzero(np.abs(w) > 0)[0]
    ph = w[nz] / abs(w[nz])
    w = w / ph
    g = g * ph
    return g, w


def dominant_singular_value(channels, theta):
    return float(np.linalg.svd(compose_channel(channels, theta), compute_uv=False)[0])


# --------------------------------------------------------------------------
# alternating optimization


@dataclass(eq=False)
class OptimizationResult:
    theta: np.ndarray
    g: np.ndarray
    w: np.ndarray
    y: np.ndarray
    reactances: ReactanceAssignment | None
    p_r_watts: float
    trace: list = field(default_factory=list)
    params: np.ndarray | None = None
    restart: int = 0

    def to_dict(self):
        out = {
            "theta": matrix_to_json(self.theta),
            "g": vector_to_json(self.g),
            "w": vector_to_json(self.w),
            "y": matrix_to_json(self.y),
            "p_r_watts": float(self.p_r_watts),
            "trace": [float(t) for t in self.trace],
        }
        if self.reactances is not None:
            out["reactances"] = {
                "x_ground": [float(v) for v in self.reactances.x_ground],
                "x_branch": [float(v) for v in self.reactances.x_branch],
            }
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        x = d.get("reactances")
        return cls(
            theta=matrix_from_json(d["theta"]),
            g=vector_from_json(d["g"]),
            w=vector_from_json(d["w"]),
            y=matrix_from_json(d["y"]),
            reactances=None if x is None else ReactanceAssignment(x["x_ground"], x["x_branch"]),
            p_r_watts=d["p_r_watts"],
            trace=list(d["trace"]),
        )


def _phase_align_theta(eff):
    h_rt, h_r, h_t = eff
    ref = np.angle(h_rt) if h_rt != 0 else 0.0
    return np.mod(ref - np.angle(h_r * h_t), 2.0 * np.pi)


def _optimize_single_connected(channels, model, cfg, p_t):
    z0 = model.line.z0_ref_ohm
    n = channels.n
    g, w = update_g_w(channels, np.eye(n))
    trace = []
    prev = None
    for _ in range(cfg.max_outer_iters):
        phases = _phase_align_theta(effective_siso(channels, g, w))
        # e^{j phi} = (1 - j z0 B) / (1 + j z0 B)  <=>  B = -tan(phi/2) / z0
        b = -np.tan(phases / 2.0) / z0
        y = 1j * np.diag(b)
        theta = scattering_from_admittance(y, z0)
        g, w = update_g_w(channels, theta)
        p = received_power(channels, theta, g, w, p_t)
        trace.append(p)
        if prev is not None and abs(p - prev) <= cfg.outer_tol * abs(p):
            break
        prev = p
    reactances = extract_reactances(y, model)
    return OptimizationResult(theta, g, w, y, reactances, p, trace, params=b * z0)


def _run_from(x, channels, model, cfg, p_t, backend, align):
    z0 = model.line.z0_ref_ohm
    g, w = update_g_w(channels, scattering_from_admittance(params_to_admittance(x, model), z0))
    trace = []
    prev = None
    # with one antenna per side g and w never change, so one aligned start suffices
    siso = channels.n_t == 1 and channels.n_r == 1
    h_inv = None
    for it in range(cfg.max_outer_iters):
        prob = InnerProblem(effective_siso(channels, g, w), model, p_t, backend)
        if align and (it == 0 or not siso):
            # the aligned point is only a candidate; keep the warm start if it is better
            x_al = aligned_start((prob.h_rt, prob.h_r, prob.h_t), model, score=prob.value)
            if x_al is not None and (it == 0 or _safe(prob.value, x_al) is not None
                                     and prob.value(x_al) > prob.value(x)):
                x = x_al
        res = quasi_newton_maximize(prob.value_and_grad, x, cfg, grad=True, inv_hessian=h_inv)
        x = res.x
        if siso:
            # same objective next time round: continue instead of restarting BFGS
            h_inv = res.inv_hessian
        y = prob.admittance(x)
        theta = scattering_from_admittance(y, z0)
        g, w = update_g_w(channels, theta)
        p = received_power(channels, theta, g, w, p_t)
        trace.append(p)
        if prev is not None and abs(p - prev) <= cfg.outer_tol * abs(p):
            break
        prev = p
    return x, y, theta, g, w, p, trace, res.f


def optimize(channels, model, config=None, p_t=1.0, backend=None):
    """Maximize received power over the surface reactances, ``g`` and ``w``.

    Single-connected surfaces use closed-form phase alignment; everything else
    uses BFGS on the auxiliary matrix. The best of ``config.restarts`` runs is
    returned. Run 0 starts from the aligned point (``init="aligned"``, falling
    back to a random draw when a lossy model cannot reach it) or from ``A = 0``,
    the identity surface (``init="zero"``); later runs start from uniform draws
    in +-0.02 S. Restarts stop early once a run meets the passive
    bound of its effective channel.
    """
    cfg = config or OptimizerConfig()
    if model.topology.n != channels.n:
        raise ContractError("model and channels disagree on the number of elements")
    if model.topology.n_edges == 0:
        return _optimize_single_connected(channels, model, cfg, p_t)
    n_par = model.topology.n + model.topology.n_edges
    z0 = model.line.z0_ref_ohm
    best = None
    errors = []
    for k in range(cfg.restarts):
        if k == 0 and cfg.init == "zero":
            x0 = np.zeros(n_par)
        else:
            # with init="aligned" this draw is only used when the aligned point is unreachable
            x0 = substream(cfg.rng_seed, k).uniform(-INIT_SPREAD_S, INIT_SPREAD_S, n_par) * z0
        try:
            run = _run_from(x0, channels, model, cfg, p_t, backend, k == 0 and cfg.init == "aligned")
        except (OptimizationError, SingularityError) as exc:
            errors.append(exc)
            continue
        if best is None or run[5] > best[0][5]:
            best = (run, k)
        if run[7] >= 1.0 - BOUND_RTOL:
            break
    if best is None:
        raise OptimizationError(f"all {cfg.restarts} runs failed: {errors[0]}")
    (x, y, theta, g, w, p, trace, _), k = best
    reactances = extract_reactances(y, model)
    return OptimizationResult(theta, g, w, y, reactances, p, trace, params=x, restart=k)
