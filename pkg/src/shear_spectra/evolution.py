"""Direct time integration of single x-modes of the linearized vorticity
equation, cross-checking eigenvalue predictions against observed dynamics.

For wavenumber k the mode obeys

    d omega / dt = -i k (U omega - U'' psi),   (d^2/dy^2 - k^2) psi = omega,

with psi pinned to zero at both walls.  The integrator is classical
four-stage Runge-Kutta on a uniform y-grid; each stage solves the Poisson
problem with a factored symmetric tridiagonal system plus one refinement
pass so the discrete residual sits at rounding level.
"""
import csv
import math

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .profiles import HypothesisError
from .rayleigh import ConvergenceError, shoot_boundary_solution
from .threshold import min_eigenvalue

__all__ = [
    "ModeState",
    "EvolutionSeries",
    "DampingReport",
    "evolve_mode",
    "growth_rate",
    "damping_probe",
    "eigenmode_initial",
    "write_time_series",
]

N_TIME_GRID = 1025
POINCARE = (2.0 / math.pi) ** 2  # norm of the inverse Dirichlet Laplacian on [-1, 1]
POISSON_TOL = 1e-10
MIN_FIT_SAMPLES = 10
DEFAULT_WINDOW = 0.5
SNAPSHOT_COUNT = 33
BLOWUP_SLACK = 6.0  # log-units of headroom above the operator-norm envelope


class ModeState:
    """One snapshot of a single x-mode.

    energy is the squared grid L2 norm of the vorticity; stream_norm is
    the plain L2 norm of psi.  poisson_residual certifies the stream
    function against the discrete operator, relative to the vorticity
    amplitude.
    """

    def __init__(self, k, t, y, omega, psi, energy, stream_norm,
                 poisson_residual):
        self.k = int(k)
        self.t = float(t)
        self.y = y
        self.omega = omega
        self.psi = psi
        self.energy = float(energy)
        self.stream_norm = float(stream_norm)
        self.poisson_residual = float(poisson_residual)


class EvolutionSeries:
    """Dense scalar history plus strided field snapshots of one mode run."""

    def __init__(self, k, y, dt, times, energies, stream_norms,
                 velocity_norms, states, poisson_residual_max):
        self.k = int(k)
        self.y = y
        self.dt = float(dt)
        self.times = times
        self.energies = energies
        self.stream_norms = stream_norms
        self.velocity_norms = velocity_norms
        self.states = states
        self.poisson_residual_max = float(poisson_residual_max)

    @property
    def steps(self):
        return self.times.size - 1

    def summary(self):
        out = {
            "k": self.k,
            "dt": self.dt,
            "steps": self.steps,
            "t_final": float(self.times[-1]),
            "energy_initial": float(self.energies[0]),
            "energy_final": float(self.energies[-1]),
            "stream_norm_final": float(self.stream_norms[-1]),
            "poisson_residual_max": self.poisson_residual_max,
        }
        try:
            out["fitted_rate"] = growth_rate(self)
        except ValueError:
            out["fitted_rate"] = None
        return out


class DampingReport:
    """Qualitative decay metrics for a stable mode."""

    def __init__(self, k, t_final, stream_ratio, velocity_ratio,
                 decay_exponent, series):
        self.k = int(k)
        self.t_final = float(t_final)
        self.stream_ratio = float(stream_ratio)
        self.velocity_ratio = float(velocity_ratio)
        self.decay_exponent = float(decay_exponent)
        self.series = series


def _poisson_factor(n_y, h, k):
    # (k^2 - d^2/dy^2) on interior nodes, symmetric positive definite
    ab = np.zeros((2, n_y - 2))
    ab[0, 1:] = -1.0 / h ** 2
    ab[1, :] = 2.0 / h ** 2 + k * k
    return cholesky_banded(ab)


def _poisson_solve(factor, omega, h, k):
    """Stream function with psi(+-1) = 0 and one refinement pass.

    Returns (psi, relative residual of the discrete operator).
    """
    n = omega.size
    rhs = -omega[1:-1]
    cols = np.column_stack([rhs.real, rhs.imag])
    sol = cho_solve_banded((factor, False), cols)
    psi = np.zeros(n, dtype=complex)
    psi[1:-1] = sol[:, 0] + 1j * sol[:, 1]

    def interior_residual(p):
        lap = (p[:-2] - 2.0 * p[1:-1] + p[2:]) / h ** 2
        return lap - k * k * p[1:-1] - omega[1:-1]

    r = interior_residual(psi)
    cols = np.column_stack([r.real, r.imag])
    corr = cho_solve_banded((factor, False), cols)
    psi[1:-1] += corr[:, 0] + 1j * corr[:, 1]
    r = interior_residual(psi)
    scale = max(float(np.max(np.abs(omega))), 1e-300)
    return psi, float(np.max(np.abs(r))) / scale


def _grid_norm(weights, field):
    return math.sqrt(float(weights @ np.abs(field) ** 2))


def evolve_mode(flow, k, omega0, T, dt=None, n_y=N_TIME_GRID,
                snapshots=SNAPSHOT_COUNT):
    """Integrate one x-mode from omega0 over [0, T].

    dt defaults to the stability estimate 0.5 / (|k| ||U||_inf +
    |k| ||U''||_inf (2/pi)^2); passing a larger one is refused.  The
    returned series tracks energy and norms at every step and keeps
    `snapshots` full field states.  Energy rising above the operator-norm
    envelope exp(2 B t) by a wide margin is reported as an integrator
    failure, since no true solution can cross it.
    """
    if int(k) != k or k == 0:
        raise ValueError("wavenumber k must be a nonzero integer; the k = 0 "
                         "mean mode does not evolve")
    k = int(k)
    if T <= 0.0:
        raise ValueError("horizon T must be positive")
    if n_y < 16:
        raise ValueError("n_y too small for the stream solve")

    y = np.linspace(-1.0, 1.0, n_y)
    h = y[1] - y[0]
    omega = np.asarray(omega0(y) if callable(omega0) else omega0,
                       dtype=complex).copy()
    if omega.shape != y.shape:
        raise ValueError("omega0 must match the %d-point grid" % n_y)

    u_bg = np.asarray(flow.u(y), dtype=float)
    upp_bg = np.asarray(flow.u(y, 2), dtype=float)
    b_total = abs(k) * (float(np.max(np.abs(u_bg)))
                        + float(np.max(np.abs(upp_bg))) * POINCARE)
    dt_max = 0.5 / b_total
    if dt is None:
        dt = dt_max
    elif dt <= 0.0:
        raise ValueError("dt must be positive")
    elif dt > dt_max * (1.0 + 1e-12):
        raise ValueError("dt = %g exceeds the stability estimate %g for "
                         "|k| = %d" % (dt, dt_max, abs(k)))
    n_steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / n_steps

    weights = np.full(n_y, h)
    weights[0] = weights[-1] = 0.5 * h
    factor = _poisson_factor(n_y, h, k)

    def rhs(w):
        psi, res = _poisson_solve(factor, w, h, k)
        return -1j * k * (u_bg * w - upp_bg * psi), psi, res

    snap_at = set(np.unique(np.linspace(
        0, n_steps, min(max(int(snapshots), 2), n_steps + 1)).round()
        .astype(int)))

    times = np.empty(n_steps + 1)
    energies = np.empty(n_steps + 1)
    stream_norms = np.empty(n_steps + 1)
    velocity_norms = np.empty(n_steps + 1)
    states = []
    res_max = 0.0
    energy0 = None

    for step in range(n_steps + 1):
        t = step * dt
        f1, psi, res = rhs(omega)
        res_max = max(res_max, res)
        if res > POISSON_TOL:
            raise ConvergenceError("stream solve residual %g exceeds %g"
                                   % (res, POISSON_TOL))
        energy = float(weights @ np.abs(omega) ** 2)
        dpsi = np.gradient(psi, h)
        times[step] = t
        energies[step] = energy
        stream_norms[step] = _grid_norm(weights, psi)
        velocity_norms[step] = math.sqrt(
            _grid_norm(weights, dpsi) ** 2
            + k * k * stream_norms[step] ** 2)
        if energy0 is None:
            energy0 = energy
        elif energy0 > 0.0 and energy > 0.0 and math.log(
                energy / energy0) > 2.0 * b_total * t + BLOWUP_SLACK:
            raise ConvergenceError(
                "energy %g at t = %g breaches the spectral bound; the "
                "integrator went unstable" % (energy, t))
        if step in snap_at:
            states.append(ModeState(k, t, y, omega.copy(), psi, energy,
                                    stream_norms[step], res))
        if step == n_steps:
            break
        f2 = rhs(omega + 0.5 * dt * f1)[0]
        f3 = rhs(omega + 0.5 * dt * f2)[0]
        f4 = rhs(omega + dt * f3)[0]
        omega = omega + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)

    return EvolutionSeries(k, y, dt, times, energies, stream_norms,
                           velocity_norms, states, res_max)


def growth_rate(series, window_fraction=DEFAULT_WINDOW):
    """Least-squares slope of log ||omega|| over the trailing window.

    Accepts an EvolutionSeries or a (times, energies) pair.  The window
    must hold at least ten samples with positive energy.
    """
    if hasattr(series, "energies"):
        times, energies = series.times, series.energies
    else:
        times, energies = series
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    n = times.size
    start = n - int(round(n * window_fraction))
    start = min(max(start, 0), n)
    t_win = times[start:]
    e_win = energies[start:]
    if t_win.size < MIN_FIT_SAMPLES:
        raise ValueError("trailing window holds %d samples; the fit needs "
                         "at least %d" % (t_win.size, MIN_FIT_SAMPLES))
    if np.any(e_win <= 0.0):
        raise ValueError("non-positive energy in the fit window; the series "
                         "is corrupt")
    return float(np.polyfit(t_win, 0.5 * np.log(e_win), 1)[0])


def eigenmode_initial(flow, c, k=1, n_y=N_TIME_GRID):
    """Vorticity profile of the eigenmode at eigenvalue c, unit energy.

    The stream eigenfunction is the wall shot phi; the matching vorticity
    is U'' phi / (U - c), regular when Im c != 0.  Returns (omega0, phi)
    on the uniform grid.
    """
    if int(k) != k or k == 0:
        raise ValueError("wavenumber k must be a nonzero integer")
    k = int(k)
    c = complex(c)
    y = np.linspace(-1.0, 1.0, n_y)
    shot = shoot_boundary_solution(flow, c, -float(k * k), -1, dense=True)
    phi = shot.sol(y)[0]
    omega = np.asarray(flow.u(y, 2), dtype=complex) * phi \
        / (np.asarray(flow.u(y), dtype=complex) - c)
    omega[0] = 0.0
    h = y[1] - y[0]
    weights = np.full(n_y, h)
    weights[0] = weights[-1] = 0.5 * h
    scale = math.sqrt(float(weights @ np.abs(omega) ** 2))
    if scale == 0.0:
        raise ValueError("eigenmode vorticity vanished; U'' is zero on the "
                         "grid")
    return omega / scale, phi / scale


def damping_probe(flow, k, T, omega0=None, n_y=N_TIME_GRID):
    """Evolve a stable mode and report how the stream function decays.

    Refuses k = 0 and any flow carrying a growing mode at this
    wavenumber (smallest eigenvalue below -k^2).  The decay exponent is
    the log-log slope of ||psi|| against t over the trailing half; the
    numbers are qualitative, certified only by grid self-consistency.
    """
    if int(k) != k or k == 0:
        raise ValueError("damping probe needs a nonzero integer k; the mean "
                         "mode does not move")
    k = int(k)
    report = min_eigenvalue(flow)
    if report.lam_min < -float(k * k):
        raise HypothesisError(
            "flow has a growing mode at |k| = %d (smallest eigenvalue %.6g "
            "< %.6g); damping is not expected" % (abs(k), report.lam_min,
                                                  -float(k * k)))
    if omega0 is None:
        omega0 = lambda y: (1.0 - y ** 2) * np.exp(-2.0 * y ** 2)
    series = evolve_mode(flow, k, omega0, T, n_y=n_y)
    tail = series.times > 0.5 * series.times[-1]
    if int(np.count_nonzero(tail)) < MIN_FIT_SAMPLES:
        raise ValueError("horizon too short for a decay fit")
    t_tail = series.times[tail]
    s_tail = series.stream_norms[tail]
    if np.any(s_tail <= 0.0):
        raise ValueError("stream norm hit zero; no decay exponent to fit")
    exponent = float(np.polyfit(np.log(t_tail), np.log(s_tail), 1)[0])
    return DampingReport(
        k, series.times[-1],
        series.stream_norms[-1] / series.stream_norms[0],
        series.velocity_norms[-1] / series.velocity_norms[0],
        exponent, series)


def _running_rates(times, energies, window_fraction=DEFAULT_WINDOW):
    """fitted_rate_so_far column: trailing-window slope using only the
    rows seen up to each index, nan while the window is underfilled."""
    n = times.size
    good = energies > 0.0
    logn = np.where(good, 0.5 * np.log(np.where(good, energies, 1.0)), 0.0)
    ct = np.concatenate([[0.0], np.cumsum(times)])
    ct2 = np.concatenate([[0.0], np.cumsum(times ** 2)])
    cy = np.concatenate([[0.0], np.cumsum(logn)])
    cty = np.concatenate([[0.0], np.cumsum(times * logn)])
    cbad = np.concatenate([[0], np.cumsum(~good)])
    out = np.full(n, np.nan)
    for i in range(n):
        m = i + 1
        start = m - int(round(m * window_fraction))
        cnt = m - start
        if cnt < MIN_FIT_SAMPLES or cbad[m] - cbad[start] > 0:
            continue
        st = ct[m] - ct[start]
        st2 = ct2[m] - ct2[start]
        sy = cy[m] - cy[start]
        sty = cty[m] - cty[start]
        den = cnt * st2 - st * st
        if den > 0.0:
            out[i] = (cnt * sty - st * sy) / den
    return out


def write_time_series(series, path):
    """CSV dump: t, energy, stream_norm, fitted_rate_so_far."""
    rates = _running_rates(series.times, series.energies)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "energy", "stream_norm", "fitted_rate_so_far"])
        for i in range(series.times.size):
            writer.writerow(["%.17g" % series.times[i],
                             "%.17g" % series.energies[i],
                             "%.17g" % series.stream_norms[i],
                             "%.17g" % rates[i]])
    return path
