"""Sturm-Liouville side of the workbench.

Minimal eigenvalue of H = -d^2/dy^2 + Q_{m,gamma} on (-1,1) with Dirichlet
walls, the gamma = 0 point-mass problem, the closed-form threshold map of
the base profile, and the critical amplitude m_* where the minimal
eigenvalue crosses -1.
"""
import math

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.optimize import brentq

from .mesh import graded_mesh
from .profiles import HypothesisError, PerturbedFlow, PotentialQ
from .rayleigh import ConvergenceError, solve_phi1

DEFAULT_N = 2048
LAMBDA_LO = -50.0
SERIES_SWITCH = 1e-2
MAX_DOUBLINGS = 10
GAMMA_MAX = 0.2
_SERIES_TERMS = 11


class EigenReport:
    """Ground state of the discretized operator.

    lam_min is Richardson-extrapolated over the grid doubling; residual
    certifies the discrete pair (finest-grid eigenvalue, eigenfunction)
    in the grid L2 norm, since the extrapolated value does not belong to
    any one grid.
    """

    def __init__(self, lam_min, y, psi, residual, grid_n, extrapolated):
        self.lam_min = float(lam_min)
        self.y = y
        self.psi = psi
        self.residual = float(residual)
        self.grid_n = int(grid_n)
        self.extrapolated = bool(extrapolated)

    def as_dict(self):
        return {
            "lambda_min": self.lam_min,
            "residual": self.residual,
            "grid_n": self.grid_n,
            "extrapolated": self.extrapolated,
        }


class ThresholdResult:
    """Critical amplitude with its bracket and the eigen-solve trail."""

    def __init__(self, m_star, bracket, lam_residual, gamma, eigen_trace):
        self.m_star = float(m_star)
        self.bracket = (float(bracket[0]), float(bracket[1]))
        self.lam_residual = float(lam_residual)
        self.gamma = float(gamma)
        self.eigen_trace = [(float(m), float(l)) for m, l in eigen_trace]

    def as_dict(self):
        return {
            "m_star": self.m_star,
            "bracket": list(self.bracket),
            "residual": self.lam_residual,
            "gamma": self.gamma,
            "trace": [[m, l] for m, l in self.eigen_trace],
        }


def _interior(n):
    h = 2.0 / n
    return h, -1.0 + h * np.arange(1, n)


def _tridiag_apply(d, e_val, v):
    out = d * v
    out[:-1] += e_val * v[1:]
    out[1:] += e_val * v[:-1]
    return out


def _polish(d, e_val, lam, v, sweeps=2):
    """Rayleigh-quotient iteration; pins the eigenvalue to rounding level
    independent of the bisection tolerance used to find it."""
    n = d.size
    ab = np.zeros((3, n))
    for _ in range(sweeps):
        ab[0, 1:] = e_val
        ab[1, :] = d - lam
        ab[2, :-1] = e_val
        try:
            w = solve_banded((1, 1), ab, v)
        except np.linalg.LinAlgError:
            break
        norm = float(np.linalg.norm(w))
        if not math.isfinite(norm) or norm == 0.0:
            break
        v = w / norm
        lam = float(v @ _tridiag_apply(d, e_val, v))
    return lam, v


def _ground_state(d, e_val):
    n = d.size
    w, vecs = eigh_tridiagonal(
        d, np.full(n - 1, e_val), select="i", select_range=(0, 0),
        tol=2.0 * np.finfo(float).tiny)
    return _polish(d, e_val, float(w[0]), vecs[:, 0])


def _dirichlet_min(q_of_y, n, delta_strength=0.0):
    """Ground state of -D^2 + q with optional point mass at y = 0.

    delta_strength s adds the jump [psi']_0 = -s psi(0): the y = 0 row
    (which exists for even n) gets -s/h.
    """
    h, y = _interior(n)
    d = 2.0 / h ** 2 + q_of_y(y)
    e_val = -1.0 / h ** 2
    if delta_strength != 0.0:
        i0 = n // 2 - 1
        d[i0] -= delta_strength / h
    lam, v = _ground_state(d, e_val)
    res = float(np.linalg.norm(_tridiag_apply(d, e_val, v) - lam * v))
    return lam, v, res, h, y


def min_eigenvalue(flow, n=DEFAULT_N):
    """Smallest Dirichlet eigenvalue of -D^2 + Q for the given flow,
    Richardson-extrapolated over grids n and 2n."""
    if n % 2:
        raise ValueError("grid count must be even")
    potential = PotentialQ(flow)
    q_of = lambda y: potential.eval(y)
    lam_c = _dirichlet_min(q_of, n)[0]
    lam_f, v, res, h, y = _dirichlet_min(q_of, 2 * n)
    if v[np.argmax(np.abs(v))] < 0.0:
        v = -v
    if float(np.min(v)) < -1e-10 * float(np.max(v)):
        raise ConvergenceError("ground state changed sign on the grid")
    lam = (4.0 * lam_f - lam_c) / 3.0
    psi = v / math.sqrt(h)
    return EigenReport(lam, y, psi, res, 2 * n, True)


def _base_flow(base):
    return PerturbedFlow(base, None, 0.0, 0.1, check=False)


def _jet_series(base, n):
    """Power-series coefficients of U about 0 from the quintic jet."""
    c = np.zeros(n)
    for k in range(min(6, n)):
        c[k] = base.taylor0[k] / math.factorial(k)
    return c


def _series_mul(a, b, n):
    return np.convolve(a, b)[:n]


def _series_inv(a, n):
    out = np.zeros(n)
    out[0] = 1.0 / a[0]
    for j in range(1, n):
        acc = 0.0
        for k in range(1, min(j, a.size - 1) + 1):
            acc += a[k] * out[j - k]
        out[j] = -acc / a[0]
    return out


def _series_div(num, den, n):
    return _series_mul(num, _series_inv(den, n), n)


def _ratio_sq_series(base, n):
    """(U / (U'(0) y))^2 as a series in y."""
    c = _jet_series(base, 6)
    h = np.zeros(n)
    for j in range(min(5, n)):
        h[j] = c[j + 1] / c[1]
    return _series_mul(h, h, n)


def _phi1_series_coeffs(base, lam, n_terms=_SERIES_TERMS):
    """Taylor coefficients of phi1 at the critical point from
    (U^2 phi1')' = -lam U^2 phi1."""
    g = _ratio_sq_series(base, n_terms)
    b = np.zeros(n_terms)
    b[0] = 1.0
    for s in range(2, n_terms):
        acc = -lam * sum(b[k] * g[s - 2 - k] for k in range(s - 1))
        acc -= (s + 1) * sum(k * b[k] * g[s - k] for k in range(1, s))
        b[s] = acc / (s * (s + 1))
    return b


def _map_integrand_series(base, lam, n_terms=_SERIES_TERMS):
    """Series of the threshold-map integrand; its value at y = 0 is -lam/3."""
    b = _phi1_series_coeffs(base, lam, n_terms + 2)
    g = _ratio_sq_series(base, n_terms)
    q = b[:n_terms].copy()
    q[0] = 0.0
    r = b[2:2 + n_terms]
    two_q = q.copy()
    two_q[0] += 2.0
    one_q = q.copy()
    one_q[0] += 1.0
    num = _series_mul(r, two_q, n_terms)
    den = _series_mul(_series_mul(one_q, one_q, n_terms), g, n_terms)
    return _series_div(num, den, n_terms)


def threshold_function_M(base, lam, tol=1e-12):
    """Reduced threshold map of the base profile:

        -U'(0)^2 * integral of (1/U^2) (1/phi1^2 - 1) over (-1, 1),

    with phi1 the regular solution at the wall-detached critical point
    y = 0.  The removable singularity at y = 0 is integrated through the
    series branch on |y| < 1e-2.  Positive and strictly decreasing in lam.
    """
    lam = float(lam)
    if lam >= 0.0:
        raise ValueError("threshold map is defined for lam < 0")
    flow0 = _base_flow(base)
    mesh = graded_mesh(0.0, 0.1)
    _, _, _, q1, _ = solve_phi1(flow0, 0.0, lam, tol=tol, mesh=mesh)
    y = mesh.nodes
    u = flow0.u(y)
    t1 = base.taylor0[1]
    p = np.empty_like(y)
    far = np.abs(y) >= SERIES_SWITCH
    qf = q1[far]
    p[far] = t1 * t1 * qf * (2.0 + qf) / ((1.0 + qf) ** 2 * u[far] ** 2)
    p[~far] = npoly.polyval(y[~far], _map_integrand_series(base, lam))
    return float(mesh.integrate(p))


def threshold_map_offset(base):
    """lam-independent gap between the reduced map and the point-mass
    amplitude: the reduced map drops the boundary terms of the second
    solution, so inverting it against the point-mass eigenvalue needs

        offset = -U'(0)^2 * I - U'(0) (1/U(-1) - 1/U(1)),

    I the regularized-kernel integral written below in the y variable.
    For Couette the integral vanishes and the offset is exactly 2.
    """
    t = base.taylor0
    up0, upp0 = t[1], t[2]
    flow0 = _base_flow(base)
    mesh = graded_mesh(0.0, 0.1)
    y = mesh.nodes
    u = flow0.u(y)
    up = flow0.u(y, 1)
    val = np.empty_like(y)
    far = np.abs(y) >= SERIES_SWITCH
    num = 1.0 / up[far] - 1.0 / up0 + (upp0 / up0 ** 3) * u[far]
    val[far] = num * up[far] / u[far] ** 2
    n_terms = 9
    uc = _jet_series(base, n_terms)
    upc = npoly.polyder(uc)
    nser = _series_inv(np.resize(upc, n_terms), n_terms)
    nser[0] -= 1.0 / up0
    nser += (upp0 / up0 ** 3) * uc
    nser[0] = 0.0
    nser[1] = 0.0
    hu = uc[1:]
    vser = _series_div(_series_mul(nser[2:], np.resize(upc, n_terms), n_terms),
                       _series_mul(hu, hu, n_terms), n_terms)
    val[~far] = npoly.polyval(y[~far], vser)
    integral = float(mesh.integrate(val))
    u_lo, u_hi = float(base.u(-1.0)), float(base.u(1.0))
    return float(-up0 ** 2 * integral - up0 * (1.0 / u_lo - 1.0 / u_hi))


def delta_amplitude_map(base, lam):
    """Amplitude m whose point-mass problem has minimal eigenvalue lam
    (lam < 0 branch): the reduced map plus the profile offset."""
    return threshold_function_M(base, lam) + threshold_map_offset(base)


def lambda_m0(base, m, n=DEFAULT_N, cross_validate=True):
    """Minimal eigenvalue of the gamma = 0 problem: -D^2 + U''/U with the
    attractive point mass m at y = 0, i.e. the jump [psi']_0 = -m psi(0)/U'(0).

    Solved by finite differences on grids n and 2n with Richardson
    extrapolation.  When m lies in the lam < 0 range of the corrected
    threshold map, the map inversion is required to agree to 1e-6.
    """
    m = float(m)
    if m < 0.0:
        raise ValueError("amplitude must be nonnegative")
    if n % 2:
        raise ValueError("grid count must be even")
    flow0 = _base_flow(base)
    potential = PotentialQ(flow0)
    q_of = lambda y: potential.eval(y)
    strength = m / base.taylor0[1]
    lam_c = _dirichlet_min(q_of, n, strength)[0]
    lam_f = _dirichlet_min(q_of, 2 * n, strength)[0]
    lam = (4.0 * lam_f - lam_c) / 3.0
    if cross_validate:
        off = threshold_map_offset(base)
        reduced = lambda L: threshold_function_M(base, L)
        if m > off + 1e-3 and m < reduced(LAMBDA_LO) + off - 1e-6:
            lam_inv = brentq(lambda L: reduced(L) + off - m,
                             LAMBDA_LO, -1e-9, xtol=1e-12)
            if abs(lam_inv - lam) > 1e-6:
                raise ConvergenceError(
                    "point-mass eigenvalue %.9f and threshold-map inversion "
                    "%.9f disagree beyond 1e-6" % (lam, lam_inv))
    return float(lam)


def find_mstar(base, pert, gamma, n=DEFAULT_N, tol=1e-8):
    """Critical amplitude m_* with lambda_{m_*,gamma} = -1.

    Brackets around the reduced-map value at -1 with radius K*gamma, K
    doubled until the bracket straddles -1, then bisects on the
    Richardson-extrapolated eigenvalue.  The eigen-solve trail is checked
    to be strictly decreasing in m.
    """
    gamma = float(gamma)
    if not 0.0 < gamma <= GAMMA_MAX + 1e-12:
        raise HypothesisError("gamma must lie in (0, %.2f]" % GAMMA_MAX)
    m_ref = threshold_function_M(base, -1.0)
    cache = {}

    def lam_of(m):
        m = float(m)
        if m not in cache:
            flow = PerturbedFlow(base, pert, m, gamma)
            cache[m] = min_eigenvalue(flow, n).lam_min
        return cache[m]

    k_rad = 1.0
    for _ in range(MAX_DOUBLINGS + 1):
        lo = max(0.0, m_ref - k_rad * gamma)
        hi = m_ref + k_rad * gamma
        if lam_of(lo) > -1.0 and lam_of(hi) < -1.0:
            break
        k_rad *= 2.0
    else:
        raise HypothesisError(
            "no bracket for the critical amplitude after %d doublings"
            % MAX_DOUBLINGS)
    m_star = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lam_mid = lam_of(mid)
        if abs(lam_mid + 1.0) <= tol:
            m_star = mid
            residual = abs(lam_mid + 1.0)
            break
        if lam_mid > -1.0:
            lo = mid
        else:
            hi = mid
    if m_star is None:
        raise ConvergenceError("bisection stalled before |lam + 1| <= %g" % tol)
    trace = sorted(cache.items())
    lams = [l for _, l in trace]
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise HypothesisError(
            "minimal eigenvalue failed to decrease along the amplitude trace")
    return ThresholdResult(m_star, (lo, hi), residual, gamma, trace)


def distance_sweep(base, pert, m, gamma_list, n=DEFAULT_N):
    """|lambda_{m,gamma} - lambda_{m,0}| / (m gamma) across gamma values."""
    lam0 = lambda_m0(base, m, n)
    rows = []
    for gamma in gamma_list:
        flow = PerturbedFlow(base, pert, m, float(gamma))
        lam = min_eigenvalue(flow, n).lam_min
        diff = abs(lam - lam0)
        rows.append({
            "gamma": float(gamma),
            "lambda_gamma": lam,
            "lambda_delta": lam0,
            "diff": diff,
            "ratio": diff / (m * float(gamma)),
        })
    return rows
