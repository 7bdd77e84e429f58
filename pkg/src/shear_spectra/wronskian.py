"""Wronskians of the Rayleigh problem and their real-axis limits.

Two equivalent eigenvalue indicators:

  modified  W = int_{-1}^{1} phi^{-2} dy   (phi the regular solution),
  full      Wf = varphi^-(1)               (shot from the left wall),

linked by Wf = phi(-1) phi(1) W whenever phi has no zeros.  As c approaches
a real c_r in the range of U the full Wronskian has one-sided limits
A -+ iB; B carries the closed formula

  B = pi * [U''(y_c)/U'(y_c)^3] (U(-1)-c_r)(U(1)-c_r) phi1(1) phi1(-1)

(the Plemelj jump of the 1/phi^2 integral across the critical layer), and A
is recovered by Richardson extrapolation of Re Wf(c_r + i eps) over a
halving eps-sequence.  A^2 + B^2 = 0 flags an embedded eigenvalue.
"""

import math

import numpy as np

from .mesh import graded_mesh
from .rayleigh import (ConvergenceError, spectral_point, assemble_regular_solution,
                       wall_values, shoot_boundary_solution)

__all__ = [
    "WronskianValue",
    "BoundaryLimit",
    "WronskianProbes",
    "modified_wronskian",
    "full_wronskian",
    "boundary_limits",
    "wronskian_probes",
]

EPS_SCAN = 0.2            # scan strip half-width, in units of gamma, is 0.5*EPS_SCAN
RICHARDSON_DEPTH = 6      # eps_k = eps0 * 2^-k, k = 0..5
DEGENERATE = 1e-13


class WronskianValue:
    def __init__(self, kind, value, point, quadrature_error, solution=None):
        self.kind = kind
        self.value = complex(value)
        self.point = point
        self.quadrature_error = float(quadrature_error)
        self.solution = solution

    def __repr__(self):
        return "WronskianValue(%s, %s, err=%.2e)" % (
            self.kind, self.value, self.quadrature_error)


class BoundaryLimit:
    """One-sided limit data of the full Wronskian at real c_r."""

    def __init__(self, c_r, A, B, extrapolation_residual, B_limit, eps_table):
        self.c_r = float(c_r)
        self.A = float(A)
        self.B = float(B)
        self.extrapolation_residual = float(extrapolation_residual)
        self.B_limit = float(B_limit)       # -Im limit, cross-check of B
        self.eps_table = eps_table          # [(eps, complex Wf)] as computed

    @property
    def indicator(self):
        return self.A ** 2 + self.B ** 2


class WronskianProbes:
    """Central finite differences of W at c = i c_i, lambda = -1."""

    def __init__(self, d_ci, d_m, gamma, steps):
        self.d_ci = complex(d_ci)
        self.d_m = complex(d_m)
        self.scaled_ci = gamma * abs(self.d_ci)
        self.abs_dm = abs(self.d_m)
        self.steps = steps


def _regular_solution(flow, c, lam, tol, floor_boost=1.0):
    point = spectral_point(flow, c, lam)
    if point.y_c is None:
        raise ValueError("Re c = %g is outside the range of the flow" % point.c_r)
    scale = (min(abs(point.c_i), flow.gamma) if point.c_i != 0.0
             else flow.gamma) * floor_boost
    return assemble_regular_solution(flow, point, tol=tol, scale=scale)


def modified_wronskian(flow, c, lam, tol=1e-10, error_estimate=True):
    """W = int 1/phi^2 on the graded mesh, with a refined-mesh error estimate.

    error_estimate=False skips the refined pass (half the cost) and
    reports nan for the quadrature error; bulk sweeps that only need the
    value use it.
    """
    c = complex(c)
    if c.imag == 0.0:
        raise ValueError("modified Wronskian needs Im c != 0; use boundary_limits")
    sol = _regular_solution(flow, c, lam, tol)
    absphi = np.abs(sol.phi)
    if float(np.min(absphi)) < DEGENERATE * float(np.max(absphi)):
        # a node fell on a zero of phi: shift the whole node set and retry
        sol = _regular_solution(flow, c, lam, tol, floor_boost=1.37)
        absphi = np.abs(sol.phi)
        if float(np.min(absphi)) < DEGENERATE * float(np.max(absphi)):
            raise ConvergenceError("regular solution vanishes on the grid "
                                   "(exact eigenvalue hit at c=%s)" % c)
    coarse = complex(sol.mesh.integrate(1.0 / sol.phi ** 2))
    if not error_estimate:
        return WronskianValue("modified", coarse, sol.point, float("nan"),
                              solution=sol)
    fine_mesh = sol.mesh.refined()
    fine = assemble_regular_solution(flow, sol.point, tol=tol, mesh=fine_mesh)
    value = complex(fine_mesh.integrate(1.0 / fine.phi ** 2))
    err = abs(value - coarse)
    return WronskianValue("modified", value, sol.point, err, solution=fine)


def full_wronskian(flow, c, lam, rtol=1e-12):
    """Full Wronskian via left-wall shooting: value phi^-(1)."""
    c = complex(c)
    if c.imag == 0.0:
        raise ValueError("full Wronskian needs Im c != 0; use boundary_limits")
    shot = shoot_boundary_solution(flow, c, lam, -1, rtol=rtol)
    value = complex(shot.y[0][-1])
    point = spectral_point(flow, c, lam)
    return WronskianValue("full", value, point, 10.0 * rtol * abs(value) + 1e-13)


def full_from_modified(flow, c, lam, tol=1e-10, error_estimate=True):
    """phi(-1) phi(1) W: the full Wronskian assembled from the regular solution.

    Cheaper than shooting when |Im c| is tiny (the graded mesh absorbs the
    near-singular layer; adaptive ODE steppers crawl through it).
    """
    wmod = modified_wronskian(flow, c, lam, tol, error_estimate=error_estimate)
    _, _, phi_w = wall_values(flow, wmod.solution)
    value = phi_w[0] * phi_w[1] * wmod.value
    scale = abs(phi_w[0] * phi_w[1])
    return WronskianValue("full", value, wmod.point,
                          wmod.quadrature_error * scale, solution=wmod.solution)


def _richardson(values):
    """Neville table for f(eps_k), eps_k halving; returns (limit, residual)."""
    T = [list(values)]
    for j in range(1, len(values)):
        prev = T[-1]
        T.append([(2.0 ** j * prev[k + 1] - prev[k]) / (2.0 ** j - 1.0)
                  for k in range(len(prev) - 1)])
    limit = T[-1][0]
    residual = abs(limit - T[-2][0]) if len(T) > 1 else float("inf")
    return limit, residual


def boundary_limits(flow, c_r, lam, eps0=None, tol=1e-10,
                    depth=RICHARDSON_DEPTH, error_estimate=True):
    """A and B of the one-sided limit Wf(c_r + i eps) -> A - iB.

    B comes from the closed formula (exact zero when U''(y_c) = 0); A from
    Richardson extrapolation of Re Wf over eps_k = eps0 2^-k.  The -Im limit
    is extrapolated too and reported as B_limit for cross-checking.

    depth trades extrapolation accuracy for speed (bulk real-axis sweeps
    run depth=3..4 with error_estimate=False; the defaults give ~1e-10).
    """
    point = spectral_point(flow, complex(c_r), lam)
    if point.y_c is None:
        raise ValueError("c_r must be interior to the range of the flow")
    y_c = point.y_c

    # closed-form B, phi1 walls evaluated at the real spectral point
    sol = assemble_regular_solution(flow, point, tol=tol)
    phi1_w, _, _ = wall_values(flow, sol)
    u_l, u_r = float(flow.u(-1.0)), float(flow.u(1.0))
    upp_c = float(flow.u(y_c, 2))
    up_c = float(flow.u(y_c, 1))
    B = math.pi * (upp_c / up_c ** 3) * (u_l - c_r) * (u_r - c_r) \
        * phi1_w[1] * phi1_w[0]

    if eps0 is None:
        eps0 = 0.5 * EPS_SCAN * flow.gamma
    table = []
    for k in range(int(depth)):
        eps = eps0 * 2.0 ** (-k)
        wf = full_from_modified(flow, complex(c_r, eps), lam, tol,
                                error_estimate=error_estimate)
        table.append((eps, wf.value))
    A, res_a = _richardson([v.real for _, v in table])
    B_lim, res_b = _richardson([-v.imag for _, v in table])
    return BoundaryLimit(c_r, A, B, max(res_a, res_b), B_lim, table)


def wronskian_probes(flow, c_i, lam=-1.0, tol=1e-10):
    """(d/dc_i) W and (d/dm) W at c = i c_i by central differences.

    Probes live in the thin strip 0 < |c_i| <= 0.1 gamma where the paper's
    derivative bounds apply.
    """
    c_i = float(c_i)
    if c_i == 0.0:
        raise ValueError("probe needs c_i != 0")
    if abs(c_i) > 0.5 * EPS_SCAN * flow.gamma + 1e-15:
        raise ValueError("probe strip is |c_i| <= %.3g" % (0.5 * EPS_SCAN * flow.gamma))
    h_ci = 1e-3 * min(abs(c_i), flow.gamma)
    wp = modified_wronskian(flow, complex(0.0, c_i + h_ci), lam, tol)
    wm = modified_wronskian(flow, complex(0.0, c_i - h_ci), lam, tol)
    noise = wp.quadrature_error + wm.quadrature_error
    if abs(wp.value - wm.value) < 10.0 * noise:
        raise ConvergenceError("c_i step %.2e is below quadrature noise" % h_ci)
    d_ci = (wp.value - wm.value) / (2.0 * h_ci)

    h_m = 1e-4
    m_lo = max(flow.m - h_m, 0.0)
    wpm = modified_wronskian(flow.with_m(flow.m + h_m), complex(0.0, c_i), lam, tol)
    wmm = modified_wronskian(flow.with_m(m_lo), complex(0.0, c_i), lam, tol)
    d_m = (wpm.value - wmm.value) / (flow.m + h_m - m_lo)
    return WronskianProbes(d_ci, d_m, flow.gamma, (h_ci, h_m))
