"""Steady Euler states bifurcating from a shear flow.

The chain: tabulate the background stream function, invert it to build
the vorticity map G with a compactly supported C^2 extension Gtilde,
find the kernel mode (k0^2, phi0) of the linearization, then Newton-
continue Delta psi = Gtilde(psi) in the unknowns (psi_per, k^2) with an
amplitude constraint pinning the solution at distance eps from shear.

Two map constructions exist because the signed stream function carries
a G' kink at psi = 0 whenever U'''(0) != 0 (measured, not assumed); the
plain construction works whenever U' is even.  The solver consumes
whichever passes the C^1 diagnostic.
"""
import csv
import json
import math

import numpy as np
from scipy.linalg import eig
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .profiles import HypothesisError, PotentialQ
from .rayleigh import ConvergenceError
from .threshold import min_eigenvalue

__all__ = [
    "VorticityMap",
    "SteadyState",
    "BranchSweep",
    "build_vorticity_map",
    "choose_vorticity_map",
    "kernel_mode",
    "solve_steady",
    "branch_sweep",
    "steady_residual",
    "hs_norm_deviation",
    "write_steady_state",
]

N_SAMPLES = 2001
N_COLLOCATION = 513      # y nodes including the walls
J_MODES = 16             # cosine modes 0..J in zeta
N_ZETA = 128
BLEND_FRACTION = 0.1
C1_GATE = 1e-6
INVERT_TOL = 1e-12
EVEN_TOL = 1e-9
NEWTON_TOL = 1e-10
NEWTON_CAP = 14
HOMOTOPY_DEPTH = 12      # smallest continuation step, as 2^-depth of the gap
ATTEMPT_BUDGET = 12      # total Newton solves one continuation may spend
DIAG_WINDOW = 0.05       # |y| window feeding the one-sided seam fits

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _gl_segment(fn, a, b):
    """Gauss-Legendre integral of fn over [a, b], vectorized over arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = mid[None, :] + half[None, :] * _GL_X[:, None]
    return half * np.einsum("g,gk->k", _GL_W, fn(nodes))


def _q_prime(flow, y):
    """d/dy of U''/U away from the removable point."""
    u = flow.u(y)
    return (flow.u(y, 3) * u - flow.u(y, 2) * flow.u(y, 1)) / u ** 2


def _taper(t, v, d1w, d2w2):
    """Quintic Hermite on [0,1]: value v, scaled slope d1w, scaled
    curvature d2w2 at t=0; flat zero at t=1."""
    h0 = 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
    h1 = t - t ** 3 * (6.0 - 8.0 * t + 3.0 * t * t)
    h2 = 0.5 * (t * t - t ** 3 * (3.0 - 3.0 * t + t * t))
    return v * h0 + d1w * h1 + d2w2 * h2


def _taper_d(t, v, d1w, d2w2):
    h0p = -30.0 * t * t * (1.0 - t) ** 2
    h1p = 1.0 - t * t * (18.0 - 32.0 * t + 15.0 * t * t)
    h2p = 0.5 * (2.0 * t - 9.0 * t * t + 12.0 * t ** 3 - 5.0 * t ** 4)
    return v * h0p + d1w * h1p + d2w2 * h2p


class VorticityMap:
    """Profile-to-vorticity relation G with a compact C^2 extension.

    g/gp evaluate Gtilde and its derivative anywhere on the line; inside
    the stream range both go through bisection inversion of the
    tabulated monotone map, outside they follow the quintic blend down
    to zero over a margin of 10 percent of the range width.
    """

    def __init__(self, flow, construction, y_tab, psi_tab, g_tab,
                 cell_signs, diagnostics, seam_lo, seam_hi):
        self.flow = flow
        self.construction = construction
        self.y_tab = y_tab
        self.psi_tab = psi_tab
        self.g_tab = g_tab
        self._cell_signs = cell_signs
        self.smoothness_diagnostics = diagnostics
        self.psi_range = (float(psi_tab[0]), float(psi_tab[-1]))
        self.margin = BLEND_FRACTION * (self.psi_range[1] - self.psi_range[0])
        self._seam_lo = seam_lo      # (value, G', G'') at psi_range[0]
        self._seam_hi = seam_hi
        width = float(np.max(np.diff(y_tab)))
        self._bisect_iters = max(4, int(math.ceil(math.log2(width / INVERT_TOL))))
        self._q = PotentialQ(flow)

    def passes_c1(self, tol=C1_GATE):
        return self.smoothness_diagnostics["order1"]["mismatch"] <= tol

    def _segment_psi(self, y_from, psi_from, y_to, idx):
        seg = _gl_segment(self.flow.u, y_from, y_to)
        return psi_from + self._cell_signs[idx] * seg

    def psi_of_y(self, y):
        """The tabulated monotone stream map at arbitrary y."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        idx = np.clip(np.searchsorted(self.y_tab, y, side="right") - 1,
                      0, len(self.y_tab) - 2)
        return self._segment_psi(self.y_tab[idx], self.psi_tab[idx], y, idx)

    def invert(self, s):
        """y with psi_of_y(y) = s, to 1e-12 within the bracketing cell.

        Newton on the tabulated map with bisection fallback; the slope
        is the flow speed, so steps are cheap and the bracket never
        leaks.  Bisection alone would triple the quadrature count.
        """
        s = np.atleast_1d(np.asarray(s, dtype=float))
        s = np.clip(s, self.psi_range[0], self.psi_range[1])
        idx = np.clip(np.searchsorted(self.psi_tab, s, side="right") - 1,
                      0, len(self.psi_tab) - 2)
        lo = self.y_tab[idx].copy()
        hi = self.y_tab[idx + 1].copy()
        anchor_y = self.y_tab[idx]
        anchor_s = self.psi_tab[idx]
        y = 0.5 * (lo + hi)
        for _ in range(3 * self._bisect_iters):
            f = self._segment_psi(anchor_y, anchor_s, y, idx) - s
            lo = np.where(f <= 0.0, y, lo)
            hi = np.where(f > 0.0, y, hi)
            slope = self._cell_signs[idx] * self.flow.u(y)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = f / slope
            trial = y - step
            inside = (trial > lo) & (trial < hi) & np.isfinite(trial)
            y = np.where(inside, trial, 0.5 * (lo + hi))
            if float(np.max(hi - lo)) < INVERT_TOL or (
                    np.all(inside) and float(np.max(np.abs(step))) < 1e-13):
                break
        return y

    def _gp_of_y(self, y):
        # G'(psi(y)) = U''/psi'; the signed branch flips with the half-channel
        gp = self._q.eval(y)
        if self.construction == "signed":
            gp = gp * np.sign(y)
        return gp

    def _eval(self, s, want_gp):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s).astype(float)
        g = np.zeros_like(s)
        gp = np.zeros_like(s) if want_gp else None
        lo, hi = self.psi_range
        w = self.margin

        inside = (s >= lo) & (s <= hi)
        if np.any(inside):
            y = self.invert(s[inside])
            g[inside] = self.flow.u(y, 1)
            if want_gp:
                gp[inside] = self._gp_of_y(y)

        below = (s < lo) & (s > lo - w)
        if np.any(below):
            v, d1, d2 = self._seam_lo
            t = (lo - s[below]) / w
            g[below] = _taper(t, v, -d1 * w, d2 * w * w)
            if want_gp:
                gp[below] = _taper_d(t, v, -d1 * w, d2 * w * w) / (-w)

        above = (s > hi) & (s < hi + w)
        if np.any(above):
            v, d1, d2 = self._seam_hi
            t = (s[above] - hi) / w
            g[above] = _taper(t, v, d1 * w, d2 * w * w)
            if want_gp:
                gp[above] = _taper_d(t, v, d1 * w, d2 * w * w) / w

        if scalar:
            g = float(g[0])
            if want_gp:
                gp = float(gp[0])
        return (g, gp) if want_gp else g

    def g(self, s):
        return self._eval(s, False)

    def g_and_gp(self, s):
        return self._eval(s, True)

    def gp(self, s):
        return self._eval(s, True)[1]

    __call__ = g


def _one_sided_derivs(s, g, s0, g0):
    """Cubic fit of g about (s0, g0) on one side; returns (G', G'')."""
    ds = s - s0
    coef = np.polynomial.polynomial.polyfit(ds, g - g0, deg=[1, 2, 3])
    return float(coef[1]), 2.0 * float(coef[2])


def build_vorticity_map(flow, construction="signed", n_samples=N_SAMPLES):
    """Tabulate the monotone stream map and compose U' with its inverse.

    signed uses the odd-reflected stream function on the whole channel;
    plain restricts to y >= 0 and demands U' even.  Diagnostics carry
    one-sided limits of G' and G'' at the y = 0 image regardless.
    """
    if construction not in ("plain", "signed"):
        raise ValueError("construction must be 'plain' or 'signed'")
    n = max(int(n_samples), int(8.0 / flow.gamma) + 1)
    if n % 2 == 0:
        n += 1

    probe = np.linspace(0.0, 1.0, 1001)[1:]
    if construction == "plain":
        asym = float(np.max(np.abs(flow.u(probe, 1) - flow.u(-probe, 1))))
        if asym > EVEN_TOL or abs(float(flow.u(0.0))) > EVEN_TOL:
            raise HypothesisError(
                "plain construction needs an odd background; U' asymmetry "
                "%.3e, U(0) = %.3e" % (asym, float(flow.u(0.0))))
        y_tab = np.linspace(0.0, 1.0, n)
    else:
        y_tab = np.linspace(-1.0, 1.0, n)

    cell_signs = np.where(0.5 * (y_tab[:-1] + y_tab[1:]) >= 0.0, 1.0, -1.0)
    increments = cell_signs * _gl_segment(flow.u, y_tab[:-1], y_tab[1:])
    psi_tab = np.concatenate([[0.0], np.cumsum(increments)])
    if construction == "signed":
        i0 = n // 2
        psi_tab -= psi_tab[i0]      # anchor psi(0) = 0 exactly
        psi_tab[i0] = 0.0
    if np.any(np.diff(psi_tab) <= 0.0):
        raise HypothesisError("stream map is not monotone on the grid")
    g_tab = np.asarray(flow.u(y_tab, 1), dtype=float)

    # one-sided seam fits at the y = 0 image (s = 0, g = U'(0))
    g0 = float(flow.u(0.0, 1))
    win_pos = (y_tab > 0.0) & (y_tab <= DIAG_WINDOW)
    dp = _one_sided_derivs(psi_tab[win_pos], g_tab[win_pos], 0.0, g0)
    if construction == "signed":
        win_neg = (y_tab < 0.0) & (y_tab >= -DIAG_WINDOW)
        dm = _one_sided_derivs(psi_tab[win_neg], g_tab[win_neg], 0.0, g0)
    else:
        # the mirrored half-channel defines the same G when U' is even,
        # so its fit measures the residual asymmetry
        dm = _one_sided_derivs(psi_tab[win_pos],
                               np.asarray(flow.u(-y_tab[win_pos], 1)),
                               0.0, g0)
    diagnostics = {
        "order1": {"plus": dp[0], "minus": dm[0],
                   "mismatch": abs(dp[0] - dm[0])},
        "order2": {"plus": dp[1], "minus": dm[1],
                   "mismatch": abs(dp[1] - dm[1])},
    }

    # blend seam data: exact wall formulas; the plain lower seam sits at
    # s = 0 where only the fitted one-sided derivatives exist
    u1 = float(flow.u(1.0))
    hi = (float(flow.u(1.0, 1)), float(flow.u(1.0, 2)) / u1,
          float(_q_prime(flow, np.asarray([1.0]))[0]) / u1)
    if construction == "signed":
        um1 = float(flow.u(-1.0))
        lo = (float(flow.u(-1.0, 1)), float(flow.u(-1.0, 2)) / (-um1),
              float(_q_prime(flow, np.asarray([-1.0]))[0]) / um1)
    else:
        # exact limits instead of the fitted ones keep the taper truly C1
        # at s = 0: G' -> Q(0) and G'' -> Q''(0)/U'(0) by l'Hopital
        q = PotentialQ(flow)
        d = min(1e-4, 0.1 * flow.gamma)
        qpp0 = float(q.eval(np.asarray([2.0 * d]))[0]
                     + q.eval(np.asarray([-2.0 * d]))[0]
                     - 2.0 * q.q0) / (4.0 * d * d)
        lo = (g0, q.q0, qpp0 / float(flow.u(0.0, 1)))

    return VorticityMap(flow, construction, y_tab, psi_tab, g_tab,
                        cell_signs, diagnostics, lo, hi)


def choose_vorticity_map(flow, n_samples=N_SAMPLES):
    """First construction passing the C^1 gate: signed, then plain."""
    reports = {}
    for construction in ("signed", "plain"):
        try:
            vmap = build_vorticity_map(flow, construction, n_samples)
        except HypothesisError as exc:
            reports[construction] = str(exc)
            continue
        if vmap.passes_c1():
            return vmap
        reports[construction] = (
            "G' mismatch %.3e"
            % vmap.smoothness_diagnostics["order1"]["mismatch"])
    err = HypothesisError("no vorticity map passes the C1 diagnostic: %s"
                          % reports)
    err.reports = reports
    raise err


def kernel_mode(flow, n=None):
    """(k0^2, ground-state report) of the linearization around shear."""
    report = min_eigenvalue(flow) if n is None else min_eigenvalue(flow, n)
    if report.lam_min >= 0.0:
        raise HypothesisError(
            "no bifurcation point: smallest eigenvalue %.6g is not negative"
            % report.lam_min)
    return -report.lam_min, report


def _zeta_setup():
    zeta = 2.0 * math.pi * np.arange(N_ZETA) / N_ZETA
    j = np.arange(J_MODES + 1)
    synth = np.cos(np.outer(zeta, j))                    # (N_ZETA, J+1)
    weights = np.full(J_MODES + 1, 2.0 / N_ZETA)
    weights[0] = 1.0 / N_ZETA
    analyze = weights[:, None] * np.cos(np.outer(j, zeta))
    return zeta, synth, analyze


def _background_stream(vmap, y):
    """The physical (nonnegative) stream of the shear at nodes y.

    The signed table is folded back; the plain table, which lives on
    y >= 0, is queried at |y| and relies on the evenness its
    construction already enforced.
    """
    y = np.asarray(y, dtype=float)
    if vmap.construction == "plain":
        return np.asarray(vmap.psi_of_y(np.abs(y)))
    return np.abs(np.asarray(vmap.psi_of_y(y)))


def _d2_matrix(n_int, h):
    """Fourth-order second-derivative matrix on the interior nodes with
    Dirichlet walls; the two rows nearest each wall use biased stencils
    whose wall coefficient multiplies zero and is dropped."""
    c_int = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
    rows, cols, vals = [], [], []
    for i in range(2, n_int - 2):
        for o in range(5):
            rows.append(i)
            cols.append(i + o - 2)
            vals.append(c_int[o])
    b = _D2_EDGE[1]
    for o in range(1, 6):
        rows.append(0)
        cols.append(o - 1)
        vals.append(b[o])
        rows.append(n_int - 1)
        cols.append(n_int - o)
        vals.append(b[o])
    for o in range(1, 5):
        rows.append(1)
        cols.append(o - 1)
        vals.append(c_int[o])
        rows.append(n_int - 2)
        cols.append(n_int - o)
        vals.append(c_int[o])
    mat = coo_matrix((np.array(vals) / h ** 2, (rows, cols)),
                     shape=(n_int, n_int))
    return mat.tocsr()


def _grid_kernel(flow, n_int=N_COLLOCATION - 2):
    """Ground state of the solver's own discrete y-operator.

    Returns (lam, phi0, h, y, D2) with phi0 normalized by h*sum(phi0^2)=1;
    the biased near-wall rows make the operator mildly nonsymmetric, so
    this goes through a dense eigensolve instead of the tridiagonal path.
    """
    h = 2.0 / (n_int + 1)
    y = -1.0 + h * np.arange(1, n_int + 1)
    D2 = _d2_matrix(n_int, h)
    q = PotentialQ(flow)
    a = -D2.toarray() + np.diag(q.eval(y))
    w, vecs = eig(a)
    i = int(np.argmin(w.real))
    if abs(float(w[i].imag)) > 1e-8:
        raise ConvergenceError(
            "grid kernel eigenvalue came out complex: %r" % w[i])
    v = np.ascontiguousarray(vecs[:, i].real)
    if v[int(np.argmax(np.abs(v)))] < 0.0:
        v = -v
    v = v / math.sqrt(h * float(v @ v))
    return float(w[i].real), v, h, y, D2


class SteadyState:
    """One point of the local bifurcation curve.

    psi_per is sampled on the zeta x y tensor grid (walls included and
    identically zero there); coeffs holds the cosine-mode profiles the
    sample grid was synthesized from.
    """

    def __init__(self, flow, vmap, eps, k_sq, k0_sq_grid, zeta, y, coeffs,
                 newton_residual, iterations):
        self.flow = flow
        self.vorticity_map = vmap
        self.eps = float(eps)
        self.k_sq = float(k_sq)
        self.k0_sq_grid = float(k0_sq_grid)
        self.zeta = zeta
        self.y = y
        self.coeffs = coeffs            # (J+1, len(y))
        self.newton_residual = float(newton_residual)
        self.iterations = int(iterations)
        _, synth, _ = _zeta_setup()
        self.psi_per = synth @ coeffs   # (N_ZETA, len(y))

    def psi_full(self):
        psi0 = _background_stream(self.vorticity_map, self.y)
        return psi0[None, :] + self.psi_per

    def velocity(self):
        """(u, v) of the full flow on the sample grid."""
        h = self.y[1] - self.y[0]
        u = np.asarray(self.flow.u(self.y))[None, :] + _fd4_d1(self.psi_per, h, 1)
        j = np.arange(J_MODES + 1)
        sin_basis = np.sin(np.outer(self.zeta, j)) * j[None, :]
        v = math.sqrt(self.k_sq) * (sin_basis @ self.coeffs)
        return u, v

    def mode_energies(self):
        h = self.y[1] - self.y[0]
        weights = np.full(J_MODES + 1, math.pi)
        weights[0] = 2.0 * math.pi
        return weights * h * np.sum(self.coeffs ** 2, axis=1)

    def fourier_energy_fraction(self, j=1):
        e = self.mode_energies()
        total = float(np.sum(e))
        return float(e[j] / total) if total > 0.0 else 0.0

    def as_dict(self):
        return {
            "construction": self.vorticity_map.construction,
            "eps": self.eps,
            "iterations": self.iterations,
            "k0_sq_grid": self.k0_sq_grid,
            "k_sq": self.k_sq,
            "residual": self.newton_residual,
        }


def solve_steady(flow, eps, warm_start=None, vorticity_map=None,
                 tol=NEWTON_TOL, n_y=None, _kernel=None):
    """Newton solve of the steady equation plus amplitude constraint.

    Unknowns are the cosine-mode profiles at interior collocation nodes
    and k^2; the initial iterate is eps * phi0 * cos(zeta) at k0^2, or a
    rescaled warm start.  A failed solve retries through intermediate
    amplitudes before giving up, so a cold call at large eps walks the
    branch instead of overshooting it.  n_y overrides the collocation
    node count for resolution studies.
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    vmap = vorticity_map if vorticity_map is not None else choose_vorticity_map(flow)
    if not vmap.passes_c1():
        err = HypothesisError(
            "vorticity map refused: G' mismatch %.3e exceeds %.0e"
            % (vmap.smoothness_diagnostics["order1"]["mismatch"], C1_GATE))
        err.diagnostics = vmap.smoothness_diagnostics
        raise err
    if _kernel is not None:
        kernel = _kernel
    else:
        kernel = _grid_kernel(flow, (n_y or N_COLLOCATION) - 2)
    if kernel[0] >= 0.0:
        raise HypothesisError(
            "no bifurcation point: grid eigenvalue %.6g is not negative"
            % kernel[0])
    return _continue_to(flow, vmap, kernel, eps, warm_start, tol)


def _continue_to(flow, vmap, kernel, eps, warm, tol):
    """Walk the branch from the warm anchor toward the target amplitude.

    A failed solve halves the step; a success moves the anchor.  The
    walk stops once the step pinches below 2^-HOMOTOPY_DEPTH of the
    original gap or the attempt budget runs out, so a target beyond the
    end of the branch reports quickly instead of grinding.
    """
    state = warm
    anchor = warm.eps if warm is not None else 0.0
    if anchor == eps and warm is not None:
        return _newton_steady(flow, vmap, kernel, eps, warm, tol)
    step = eps - anchor
    floor = max(abs(step) * 0.5 ** HOMOTOPY_DEPTH, 1e-12)
    for _ in range(ATTEMPT_BUDGET):
        if abs(eps - anchor) <= abs(step):
            target = eps
        else:
            target = anchor + step
        try:
            state = _newton_steady(flow, vmap, kernel, target, state, tol)
        except ConvergenceError:
            step *= 0.5
            if abs(step) < floor:
                break
            continue
        anchor = target
        if anchor == eps:
            return state
    raise ConvergenceError(
        "no steady state found at eps=%g: the branch was lost past eps=%g"
        % (eps, anchor))


def _newton_steady(flow, vmap, kernel, eps, warm_start, tol):
    lam_grid, phi0, h, y_int, D2 = kernel
    k0_sq = -lam_grid
    zeta, synth, analyze = _zeta_setup()
    n_int = y_int.size
    n_modes = J_MODES + 1

    y_full = np.concatenate([[-1.0], y_int, [1.0]])
    psi0_int = _background_stream(vmap, y_int)
    nl_base = vmap.g(psi0_int)
    drift = float(np.max(np.abs(nl_base - np.asarray(flow.u(y_int, 1)))))
    if drift > 1e-8:
        raise HypothesisError(
            "map does not reproduce the background vorticity on the "
            "channel (drift %.3e); the shear is not on the solution set"
            % drift)

    # unknown layout: x[i * n_modes + j] = mode-j profile at node i, then k^2
    n_unknowns = n_int * n_modes + 1
    j_sq = (np.arange(n_modes) ** 2).astype(float)

    def residual(coeffs, k_sq):
        psi_grid = synth @ coeffs                     # (N_ZETA, n_int)
        gval, gpval = vmap.g_and_gp(psi0_int[None, :] + psi_grid)
        nonlin = analyze @ (gval - nl_base[None, :])  # (n_modes, n_int)
        d2 = (D2 @ coeffs.T).T
        F = -k_sq * j_sq[:, None] * coeffs + d2 - nonlin
        constraint = h * float(coeffs[1] @ phi0) - eps
        return F, constraint, gpval

    if warm_start is not None:
        if warm_start.coeffs.shape[1] != n_int + 2:
            raise ValueError("warm start lives on a different grid")
        scale = eps / warm_start.eps if warm_start.eps > 0.0 else 0.0
        coeffs = warm_start.coeffs[:, 1:-1] * scale
        k_sq = warm_start.k_sq
    else:
        coeffs = np.zeros((n_modes, n_int))
        coeffs[1] = eps * phi0
        k_sq = k0_sq

    # static sparsity pattern: dense mode-coupling blocks per node, the
    # second-difference stencil replicated per mode, and the k^2 border
    i_idx = np.arange(n_int)
    blk_rows = (np.repeat(i_idx, n_modes * n_modes) * n_modes
                + np.tile(np.repeat(np.arange(n_modes), n_modes), n_int))
    blk_cols = (np.repeat(i_idx, n_modes * n_modes) * n_modes
                + np.tile(np.tile(np.arange(n_modes), n_modes), n_int))
    d2c = D2.tocoo()
    mode_off = np.arange(n_modes)
    d2_rows = (d2c.row[:, None] * n_modes + mode_off[None, :]).ravel()
    d2_cols = (d2c.col[:, None] * n_modes + mode_off[None, :]).ravel()
    d2_vals = np.repeat(d2c.data, n_modes)
    border_col = np.full(n_int * n_modes, n_unknowns - 1)
    j_sq_flat = np.tile(j_sq, n_int)
    rows_static = np.concatenate([blk_rows, d2_rows,
                                  np.arange(n_int * n_modes),
                                  np.full(n_int, n_unknowns - 1)])
    cols_static = np.concatenate([blk_cols, d2_cols, border_col,
                                  i_idx * n_modes + 1])

    F, constraint, gpval = residual(coeffs, k_sq)
    res = max(float(np.max(np.abs(F))), abs(constraint))
    iters = 0
    slow = 0
    while res > tol:
        if iters >= NEWTON_CAP or slow >= 3 or not math.isfinite(res):
            raise ConvergenceError(
                "steady solve stalled at eps=%g: residual %.3e" % (eps, res))
        # mode-coupling blocks: analyze . diag(G'(psi)) . synth at each node
        blocks = np.einsum("jl,li,lk->ijk", analyze, gpval, synth)
        block_vals = -blocks.reshape(-1) + np.where(
            blk_rows == blk_cols, -k_sq * j_sq_flat[blk_rows], 0.0)
        bcol_vals = -j_sq_flat * coeffs.T.reshape(-1)
        vals = np.concatenate([block_vals, d2_vals, bcol_vals, h * phi0])
        jac = coo_matrix((vals, (rows_static, cols_static)),
                         shape=(n_unknowns, n_unknowns)).tocsc()
        rhs = np.empty(n_unknowns)
        rhs[:-1] = -F.T.reshape(-1)
        rhs[-1] = -constraint
        try:
            delta = splu(jac).solve(rhs)
        except RuntimeError as exc:
            raise ConvergenceError("steady Jacobian is singular at eps=%g: %s"
                                   % (eps, exc))
        d_coeffs = delta[:-1].reshape(n_int, n_modes).T
        d_k = float(delta[-1])
        # backtracking keeps the iteration inside the basin; a step that
        # cannot reduce the residual at 2^-5 of its length has left it,
        # and three barely-shrinking steps in a row mean a fold is near
        t = 1.0
        while True:
            trial_c = coeffs + t * d_coeffs
            trial_k = k_sq + t * d_k
            Fn, cn, gpn = residual(trial_c, trial_k)
            rn = max(float(np.max(np.abs(Fn))), abs(cn))
            if rn < res and math.isfinite(rn):
                break
            t *= 0.5
            if t < 1.0 / 32.0:
                raise ConvergenceError(
                    "steady solve diverged at eps=%g: residual %.3e"
                    % (eps, res))
        slow = slow + 1 if rn > 0.9 * res else 0
        coeffs, k_sq = trial_c, trial_k
        F, constraint, gpval, res = Fn, cn, gpn, rn
        iters += 1

    full = np.zeros((n_modes, n_int + 2))
    full[:, 1:-1] = coeffs
    return SteadyState(flow, vmap, eps, k_sq, k0_sq, zeta, y_full, full,
                       res, iters)


# fourth-order finite differences on a uniform grid, one-sided closures

_D1_EDGE = np.array([[-25.0, 48.0, -36.0, 16.0, -3.0],
                     [-3.0, -10.0, 18.0, -6.0, 1.0]]) / 12.0
_D2_EDGE = np.array([[45.0, -154.0, 214.0, -156.0, 61.0, -10.0],
                     [10.0, -15.0, -4.0, 14.0, -6.0, 1.0]]) / 12.0


def _fd4_d1(F, h, axis):
    F = np.moveaxis(np.asarray(F, dtype=float), axis, -1)
    out = np.empty_like(F)
    out[..., 2:-2] = (F[..., :-4] - 8.0 * F[..., 1:-3]
                      + 8.0 * F[..., 3:-1] - F[..., 4:]) / 12.0
    for r in range(2):
        out[..., r] = F[..., :5] @ _D1_EDGE[r]
        out[..., -1 - r] = -(F[..., -5:][..., ::-1] @ _D1_EDGE[r])
    return np.moveaxis(out / h, -1, axis)


def _fd4_d2(F, h, axis):
    F = np.moveaxis(np.asarray(F, dtype=float), axis, -1)
    out = np.empty_like(F)
    out[..., 2:-2] = (-F[..., :-4] + 16.0 * F[..., 1:-3] - 30.0 * F[..., 2:-2]
                      + 16.0 * F[..., 3:-1] - F[..., 4:]) / 12.0
    for r in range(2):
        out[..., r] = F[..., :6] @ _D2_EDGE[r]
        out[..., -1 - r] = F[..., -6:][..., ::-1] @ _D2_EDGE[r]
    return np.moveaxis(out / h ** 2, -1, axis)


def _dzeta(F, order=1):
    """Spectral zeta derivative of real samples on the uniform grid."""
    fhat = np.fft.rfft(F, axis=0)
    j = np.arange(fhat.shape[0])
    mult = (1j * j) ** order
    return np.fft.irfft(fhat * mult[:, None], n=F.shape[0], axis=0)


def steady_residual(state):
    """Solver-independent check: u . grad(omega) on the sample grid.

    omega comes from the discrete Laplacian of the stream sample
    (spectral in zeta, fourth-order differences in y), never from the
    vorticity map.  The shear part enters through exact profile
    derivatives, so difference truncation touches only the small
    perturbation field; the return value is the advection residual
    relative to the size of its two constituent terms.
    """
    h = state.y[1] - state.y[0]
    k = math.sqrt(state.k_sq)
    p = state.psi_per
    u_bg = np.asarray(state.flow.u(state.y))[None, :]
    om_bg_y = np.asarray(state.flow.u(state.y, 2))[None, :]
    om_p = state.k_sq * _dzeta(p, 2) + _fd4_d2(p, h, 1)
    term1 = (u_bg + _fd4_d1(p, h, 1)) * k * _dzeta(om_p, 1)
    term2 = k * _dzeta(p, 1) * (om_bg_y + _fd4_d1(om_p, h, 1))
    scale = max(float(np.max(np.abs(term1))), float(np.max(np.abs(term2))),
                1e-300)
    return float(np.max(np.abs(term1 - term2))) / scale


def hs_norm_deviation(state, s):
    """H^s norm of (u - U_shear, v) over the zeta x y domain.

    Integer s sums L^2 norms of all derivatives up to order s (spectral
    in zeta, fourth-order differences in y).  Fractional s goes through
    an even reflection in y and a Fourier multiplier, a quadrature
    approximation adequate for proportionality checks.
    """
    u, v = state.velocity()
    du = u - np.asarray(state.flow.u(state.y))[None, :]
    h = state.y[1] - state.y[0]

    def l2_sq(f):
        wy = np.full(f.shape[1], h)
        wy[0] = wy[-1] = 0.5 * h
        return float(np.sum(f ** 2 @ wy) * (2.0 * math.pi / f.shape[0]))

    if abs(s - round(s)) < 1e-12:
        order = int(round(s))
        total = 0.0
        for f in (du, v):
            derivs = {(0, 0): f}
            for p in range(1, order + 1):
                for az in range(p + 1):
                    ay = p - az
                    if az > 0:
                        base = derivs[(az - 1, ay)]
                        derivs[(az, ay)] = _dzeta(base, 1)
                    else:
                        derivs[(az, ay)] = _fd4_d1(derivs[(0, ay - 1)], h, 1)
            total += sum(l2_sq(d) for d in derivs.values())
        return math.sqrt(total)

    total = 0.0
    for f in (du, v):
        ext = np.concatenate([f, f[:, -2:0:-1]], axis=1)   # even reflection
        ny = ext.shape[1]
        fhat = np.fft.fft2(ext)
        xi = 2.0 * math.pi * np.fft.fftfreq(f.shape[0], d=2.0 * math.pi / f.shape[0])
        eta = 2.0 * math.pi * np.fft.fftfreq(ny, d=h)
        mult = (1.0 + xi[:, None] ** 2 + eta[None, :] ** 2) ** s
        cell = (2.0 * math.pi / f.shape[0]) * h / (f.shape[0] * ny)
        total += cell * float(np.sum(mult * np.abs(fhat) ** 2))
    return math.sqrt(total)


class BranchSweep:
    """Solutions along the local curve plus the proportionality table."""

    def __init__(self, states, table, k0_sq, k0_sq_grid, vmap):
        self.states = states
        self.table = table
        self.k0_sq = k0_sq
        self.k0_sq_grid = k0_sq_grid
        self.vorticity_map = vmap

    def rows(self):
        return [dict(r) for r in self.table]


def branch_sweep(flow, eps_list, tau=0.5, n_y=None):
    """Solve the curve at each eps and tabulate deviation norms.

    The high exponent is s = 5/2 - tau + N with N the base profile's
    declared smoothness order; k gaps are measured against the
    collocation-grid kernel value, the bifurcation point of the
    discretized system.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e < 0.0 for e in eps_list):
        raise ValueError("eps values must be nonnegative")
    vmap = choose_vorticity_map(flow)
    k0_sq, _report = kernel_mode(flow)
    kernel = _grid_kernel(flow, (n_y or N_COLLOCATION) - 2)
    k0_sq_grid = -kernel[0]
    s_high = 2.5 - tau + flow.base.smoothness_order

    states = {}
    warm = None
    for eps in sorted(set(eps_list)):
        state = solve_steady(flow, eps, warm_start=warm, vorticity_map=vmap,
                             _kernel=kernel)
        states[eps] = state
        if eps > 0.0:
            warm = state

    ordered = [states[e] for e in eps_list]
    table = []
    for state in ordered:
        h2 = hs_norm_deviation(state, 2)
        hs = h2 if s_high == 2.0 else hs_norm_deviation(state, s_high)
        eps = state.eps
        table.append({
            "eps": eps,
            "k_sq": state.k_sq,
            "k": math.sqrt(state.k_sq),
            "k_gap_grid": state.k_sq - k0_sq_grid,
            "h2": h2,
            "h2_over_eps": h2 / eps if eps > 0.0 else float("nan"),
            "hs": hs,
            "hs_over_eps": hs / eps if eps > 0.0 else float("nan"),
            "s_high": s_high,
            "residual": state.newton_residual,
        })
    return BranchSweep(ordered, table, k0_sq, k0_sq_grid, vmap)


def write_steady_state(state, prefix):
    """Persist a state: <prefix>.csv with the stream samples and a JSON
    sidecar with the scalars."""
    csv_path = prefix + ".csv"
    json_path = prefix + ".json"
    psi = state.psi_full()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zeta", "y", "psi_per", "psi_full"])
        for l, z in enumerate(state.zeta):
            for i, yy in enumerate(state.y):
                writer.writerow(["%.17g" % z, "%.17g" % yy,
                                 "%.17g" % state.psi_per[l, i],
                                 "%.17g" % psi[l, i]])
    sidecar = dict(state.as_dict())
    sidecar["h2_deviation"] = hs_norm_deviation(state, 2)
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
