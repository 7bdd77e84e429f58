"""Regular and boundary-shot solutions of the Rayleigh equation.

The regular solution through the critical layer y_c (where U(y_c) = c_r)
factors as phi = (U - c) * phi1 * phi2:

  phi1, real, solves ((U-c_r)^2 phi1')' = -lambda (U-c_r)^2 phi1,
        phi1(y_c) = 1, phi1'(y_c) = 0, via its Volterra form
        phi1 = 1 + int_{y_c}^y -lambda/(U-c_r)^2 int_{y_c}^w phi1 (U-c_r)^2;

  phi2, complex, carries the imaginary shift of c:
        phi2 = 1 - 2i c_i int_{y_c}^y X^{-2} int_{y_c}^w
               U'(U-c)/(U-c_r) phi1' phi1 phi2,  X = (U-c) phi1.

Both are Picard fixed points on a mesh graded toward y_c; the iteration
contracts factorially.  Boundary-shot solutions (phi(-1)=0, phi'(-1)=1 and
the mirror) come from direct complex ODE integration, valid off the real
axis where the coefficient is regular.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .mesh import graded_mesh

__all__ = [
    "ConvergenceError",
    "SpectralPoint",
    "RayleighSolution",
    "spectral_point",
    "solve_phi1",
    "solve_phi2",
    "assemble_regular_solution",
    "wall_values",
    "shoot_boundary_solution",
]

PICARD_CAP = 200
DEFAULT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """An iterative solve ran out of its iteration budget."""


class SpectralPoint:
    """Phase speed c, spectral parameter lambda = -k^2, and the critical layer."""

    def __init__(self, c, lam, y_c):
        self.c = complex(c)
        self.lam = float(lam)
        self.y_c = y_c          # None when Re c is outside the range of U

    @property
    def c_r(self):
        return self.c.real

    @property
    def c_i(self):
        return self.c.imag


def spectral_point(flow, c, lam):
    """Locate the critical layer U_{m,gamma}(y_c) = Re c; flag when absent."""
    c = complex(c)
    u_lo, u_hi = flow.u_range()
    if not u_lo < c.real < u_hi:
        return SpectralPoint(c, lam, None)
    y_c = brentq(lambda y: float(flow.u(y) - c.real), -1.0, 1.0, xtol=1e-15)
    resid = abs(float(flow.u(y_c)) - c.real)
    if resid > 1e-12:
        raise ConvergenceError("critical layer residual %g" % resid)
    return SpectralPoint(c, lam, y_c)


class RayleighSolution:
    """Sampled regular solution on a graded mesh.

    q1 = phi1 - 1 is kept separately: the Volterra update produces it at full
    relative accuracy, which the threshold integrand (1/phi1^2 - 1)/U^2 needs
    near the critical layer.
    """

    def __init__(self, mesh, point, phi1, dphi1, q1, phi2, dphi2, phi, dphi,
                 residual, iterations):
        self.mesh = mesh
        self.point = point
        self.phi1 = phi1
        self.dphi1 = dphi1
        self.q1 = q1
        self.phi2 = phi2
        self.dphi2 = dphi2
        self.phi = phi
        self.dphi = dphi
        self.residual = residual
        self.iterations = iterations

    @property
    def grid(self):
        return self.mesh.nodes


def _phi1_iteration(mesh, w2, lam, tol, cap):
    """Picard loop for q1 = phi1 - 1; returns (q1, I) with I = int phi1 (U-c_r)^2."""
    q1 = np.zeros_like(w2)
    for it in range(cap):
        inner = mesh.cumulative_from_center(w2 * (1.0 + q1))
        q1_new = mesh.cumulative_from_center(-lam * inner / w2)
        change = float(np.max(np.abs(q1_new - q1)))
        q1 = q1_new
        if change <= tol:
            return q1, mesh.cumulative_from_center(w2 * (1.0 + q1)), it + 1
    raise ConvergenceError(
        "phi1 Picard stalled at %d iterations (|lambda| too large for the mesh)" % cap)


def solve_phi1(flow, y_c, lam, tol=DEFAULT_TOL, mesh=None, scale=None):
    """phi1 on a graded mesh; returns (mesh, phi1, dphi1, q1, iterations).

    dphi1 is recovered from the running integral, never by differencing:
    phi1'(y) = -lambda * I(y) / (U-c_r)^2.
    """
    if mesh is None:
        if scale is None:
            scale = flow.gamma
        mesh = graded_mesh(y_c, scale)
    u = flow.u(mesh.nodes)
    c_r = float(flow.u(y_c))
    w2 = (u - c_r) ** 2
    q1, I, its = _phi1_iteration(mesh, w2, lam, tol, PICARD_CAP)
    phi1 = 1.0 + q1
    dphi1 = -lam * I / w2
    return mesh, phi1, dphi1, q1, its


def solve_phi2(flow, point, mesh, phi1, dphi1, tol=DEFAULT_TOL):
    """Complex phi2 on the phi1 mesh; identically 1 when c_i = 0.

    The inner integrand uses phi1'/(U-c_r) = -lambda I/(U-c_r)^3, which stays
    bounded through the layer; X = (U-c) phi1 never vanishes off the axis.
    """
    if point.c_i == 0.0:
        one = np.ones(mesh.size, dtype=complex)
        return one, np.zeros(mesh.size, dtype=complex), 0
    u = flow.u(mesh.nodes)
    up = flow.u(mesh.nodes, 1)
    c = point.c
    c_r = point.c_r
    X2 = ((u - c) * phi1) ** 2
    base_inner = up * (u - c) * dphi1 / (u - c_r) * phi1
    phi2 = np.ones(mesh.size, dtype=complex)
    for it in range(PICARD_CAP):
        inner = mesh.cumulative_from_center(base_inner * phi2)
        phi2_new = 1.0 - 2.0j * point.c_i * mesh.cumulative_from_center(inner / X2)
        change = float(np.max(np.abs(phi2_new - phi2)))
        phi2 = phi2_new
        if change <= tol:
            dphi2 = -2.0j * point.c_i * mesh.cumulative_from_center(base_inner * phi2) / X2
            return phi2, dphi2, it + 1
    raise ConvergenceError("phi2 Picard stalled at %d iterations" % PICARD_CAP)


def _panel_second_derivative(mesh, f):
    """Panel-local spectral second derivative of nodal data."""
    from numpy.polynomial import legendre as L

    n = mesh.n_nodes
    out = np.empty_like(f)
    xr = mesh._xr
    wr = mesh._wr
    # nodal -> Legendre coefficients on the reference panel
    P = np.array([(2 * k + 1) / 2.0 * wr * L.legval(xr, _unit_vec(k, n))
                  for k in range(n)])
    for p, (a, b) in enumerate(mesh.panels):
        h = 0.5 * (b - a)
        coeffs = P @ f[p * n:(p + 1) * n]
        d2 = L.legder(coeffs, 2)
        out[p * n:(p + 1) * n] = L.legval(xr, d2) / h ** 2
    return out


def _unit_vec(k, n):
    c = np.zeros(n)
    c[k] = 1.0
    return c


def assemble_regular_solution(flow, point, tol=DEFAULT_TOL, mesh=None, scale=None):
    """Full regular solution phi = (U-c) phi1 phi2 with derivatives and defect.

    The defect is the Rayleigh operator applied to phi by panel-local spectral
    differentiation, measured away from the critical layer (|y - y_c| >= 0.1)
    and normalized by the local solution scale.
    """
    if point.y_c is None:
        raise ValueError("regular solution needs a critical layer inside [-1,1]")
    if mesh is None and scale is None:
        scale = min(abs(point.c_i), flow.gamma) if point.c_i != 0.0 else flow.gamma
    mesh, phi1, dphi1, q1, it1 = solve_phi1(flow, point.y_c, point.lam, tol,
                                            mesh=mesh, scale=scale)
    phi2, dphi2, it2 = solve_phi2(flow, point, mesh, phi1, dphi1, tol)
    u = flow.u(mesh.nodes)
    up = flow.u(mesh.nodes, 1)
    upp = flow.u(mesh.nodes, 2)
    phi = (u - point.c) * phi1 * phi2
    dphi = up * phi1 * phi2 + (u - point.c) * (dphi1 * phi2 + phi1 * dphi2)

    d2phi = _panel_second_derivative(mesh, phi)
    away = np.abs(mesh.nodes - point.y_c) >= 0.1
    if np.any(away):
        op = -d2phi + (upp / (u - point.c)) * phi - point.lam * phi
        scale_ref = float(np.max(np.abs(d2phi[away]))) or 1.0
        residual = float(np.max(np.abs(op[away]))) / scale_ref
    else:
        residual = float("nan")
    return RayleighSolution(mesh, point, phi1, dphi1, q1, phi2, dphi2, phi, dphi,
                            residual, it1 + it2)


def wall_values(flow, sol):
    """phi1, phi2, phi at the channel walls y = -1 and y = +1.

    Mesh nodes are interior (Gauss points), so the wall values come from
    whole-panel sums of the converged Volterra integrands; no extrapolation.
    """
    mesh, point = sol.mesh, sol.point
    u = flow.u(mesh.nodes)
    c_r = point.c_r
    w2 = (u - c_r) ** 2
    inner = mesh.cumulative_from_center(w2 * sol.phi1)
    lo1, hi1 = mesh.cumulative_endpoints(-point.lam * inner / w2)
    phi1_w = (1.0 + lo1, 1.0 + hi1)
    if point.c_i == 0.0:
        phi2_w = (1.0 + 0.0j, 1.0 + 0.0j)
    else:
        up = flow.u(mesh.nodes, 1)
        X2 = ((u - point.c) * sol.phi1) ** 2
        base_inner = up * (u - point.c) * sol.dphi1 / (u - c_r) * sol.phi1
        inner2 = mesh.cumulative_from_center(base_inner * sol.phi2)
        lo2, hi2 = mesh.cumulative_endpoints(inner2 / X2)
        phi2_w = (1.0 - 2.0j * point.c_i * lo2, 1.0 - 2.0j * point.c_i * hi2)
    u_w = (float(flow.u(-1.0)), float(flow.u(1.0)))
    phi_w = ((u_w[0] - point.c) * phi1_w[0] * phi2_w[0],
             (u_w[1] - point.c) * phi1_w[1] * phi2_w[1])
    return phi1_w, phi2_w, phi_w


def shoot_boundary_solution(flow, c, lam, side, rtol=1e-12, atol=1e-14,
                            dense=False):
    """Integrate the Rayleigh equation from one wall: value 0, slope 1.

    side = -1 launches at y = -1 and lands at +1 (the solution whose terminal
    value is the eigenvalue indicator); side = +1 mirrors.  Requires Im c != 0
    so the coefficient stays regular on the path.
    """
    c = complex(c)
    if c.imag == 0.0:
        raise ValueError("boundary shot needs Im c != 0; real c has a singular layer")
    if side not in (-1, 1):
        raise ValueError("side must be -1 or +1")

    def rhs(y, z):
        u = flow.u(y)
        upp = flow.u(y, 2)
        return [z[1], (upp / (u - c) - lam) * z[0]]

    y0, y1 = (-1.0, 1.0) if side == -1 else (1.0, -1.0)
    sol = solve_ivp(rhs, [y0, y1], [0.0 + 0.0j, 1.0 + 0.0j], method="DOP853",
                    rtol=rtol, atol=atol, dense_output=dense)
    if not sol.success:
        raise ConvergenceError("boundary shot failed: %s" % sol.message)
    return sol
