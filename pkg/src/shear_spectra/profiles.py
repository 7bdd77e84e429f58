"""Shear profiles on [-1,1] and the perturbed family U(y) + m*gamma^2*Gtilde(y/gamma).

Base profiles are strictly monotone with U(0) = 0 and U''(0) = 0.  A
perturbation is described by a bump Gamma whose antiderivative Gtilde
steepens the flow near y = 0; sigma(x) = Gamma'(x)/x must be negative and
integrate to -1 over the line.  Everything here is plain evaluation plus
hypothesis checking; no spectral machinery.
"""

import csv
import math

import numpy as np

__all__ = [
    "HypothesisError",
    "BaseProfile",
    "PerturbationProfile",
    "PerturbedFlow",
    "PotentialQ",
    "ValidationReport",
    "couette",
    "cubic",
    "sine",
    "tabulated",
    "base_profile",
    "gaussian_perturbation",
    "perturbation_profile",
    "eval_flow",
    "eval_potential",
    "validate",
    "sobolev_distance",
]

Y_SWITCH = 1e-3          # below this |y| the ratio U''/U is assembled from series
ADMISSIBILITY_POINTS = 10001


class HypothesisError(ValueError):
    """A profile or flow violates the standing hypotheses."""


class BaseProfile:
    """Monotone base shear U with derivative callables and Taylor data at 0.

    taylor0 holds (U(0), U'(0), ..., U^(5)(0)); the quintic jet feeds the
    removable-singularity branches of U''/U and the threshold integrand.
    """

    def __init__(self, name, u, up, upp, uppp, c0, ratio_bound, taylor0,
                 smoothness_order=0):
        self.name = name
        self.u = u
        self.up = up
        self.upp = upp
        self.uppp = uppp
        self.c0 = float(c0)
        self.ratio_bound = float(ratio_bound)
        self.taylor0 = tuple(float(t) for t in taylor0)
        self.smoothness_order = int(smoothness_order)

    def u_over_y(self, y):
        """U(y)/y with the removable singularity filled from the Taylor jet."""
        y = np.asarray(y, dtype=float)
        t = self.taylor0
        series = (t[1] + y * (t[2] / 2.0 + y * (t[3] / 6.0
                  + y * (t[4] / 24.0 + y * t[5] / 120.0))))
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = np.where(y != 0.0, self.u(y) / np.where(y == 0.0, 1.0, y), 0.0)
        return np.where(np.abs(y) < Y_SWITCH, series, direct)

    def upp_over_y(self, y):
        """U''(y)/y, removable at 0 because U''(0) = 0."""
        y = np.asarray(y, dtype=float)
        t = self.taylor0
        series = t[3] + y * (t[4] / 2.0 + y * t[5] / 6.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = np.where(y != 0.0, self.upp(y) / np.where(y == 0.0, 1.0, y), 0.0)
        return np.where(np.abs(y) < Y_SWITCH, series, direct)


def couette():
    one = np.ones_like
    zero = np.zeros_like
    return BaseProfile(
        "couette",
        u=lambda y: np.asarray(y, dtype=float),
        up=lambda y: one(np.asarray(y, dtype=float)),
        upp=lambda y: zero(np.asarray(y, dtype=float)),
        uppp=lambda y: zero(np.asarray(y, dtype=float)),
        c0=1.0, ratio_bound=0.0,
        taylor0=(0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
    )


def cubic():
    # U = y - y^3/6: odd, U' = 1 - y^2/2 >= 1/2 on [-1,1], U''/U in (-1.2, 0)
    return BaseProfile(
        "cubic",
        u=lambda y: np.asarray(y) - np.asarray(y) ** 3 / 6.0,
        up=lambda y: 1.0 - np.asarray(y) ** 2 / 2.0,
        upp=lambda y: -np.asarray(y, dtype=float),
        uppp=lambda y: -np.ones_like(np.asarray(y, dtype=float)),
        c0=0.5, ratio_bound=1.2,
        taylor0=(0.0, 1.0, 0.0, -1.0, 0.0, 0.0),
    )


def sine(b=1.0):
    b = float(b)
    if not 0.0 < b < math.pi / 2.0:
        raise HypothesisError("sine profile needs 0 < b < pi/2, got %g" % b)
    return BaseProfile(
        "sine",
        u=lambda y: np.sin(b * np.asarray(y)) / b,
        up=lambda y: np.cos(b * np.asarray(y)),
        upp=lambda y: -b * np.sin(b * np.asarray(y)),
        uppp=lambda y: -b * b * np.cos(b * np.asarray(y)),
        c0=math.cos(b), ratio_bound=b * b,
        taylor0=(0.0, 1.0, 0.0, -b * b, 0.0, b ** 4),
    )


def tabulated(path, smoothness_order=0):
    """Base profile from a two-column CSV (y, U).

    A Chebyshev fit supplies derivatives; the endpoint pins U(0) = U''(0) = 0
    are checked, not enforced.
    """
    ys, us = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            ys.append(float(row[0]))
            us.append(float(row[1]))
    ys = np.asarray(ys)
    us = np.asarray(us)
    if ys.min() > -1.0 + 1e-12 or ys.max() < 1.0 - 1e-12:
        raise HypothesisError("tabulated profile must cover [-1,1]")
    deg = min(48, len(ys) - 1)
    fit = np.polynomial.Chebyshev.fit(ys, us, deg, domain=[-1.0, 1.0])
    d1, d2, d3 = fit.deriv(1), fit.deriv(2), fit.deriv(3)
    taylor0 = tuple(float(fit.deriv(k)(0.0)) if k else float(fit(0.0))
                    for k in range(6))
    grid = np.linspace(-1.0, 1.0, 2001)
    c0 = float(np.min(d1(grid)))
    if c0 <= 0.0:
        raise HypothesisError("tabulated profile is not strictly monotone")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(grid) > 0.05, d2(grid) / fit(grid), 0.0)
    return BaseProfile("tabulated", u=fit, up=d1, upp=d2, uppp=d3,
                       c0=c0, ratio_bound=float(np.max(-ratio)),
                       taylor0=taylor0, smoothness_order=smoothness_order)


_BASES = {"couette": couette, "cubic": cubic, "sine": sine, "tabulated": tabulated}


def base_profile(name, **params):
    if name not in _BASES:
        raise HypothesisError("unknown base profile %r" % name)
    return _BASES[name](**params)


class PerturbationProfile:
    """Bump Gamma with antiderivative Gtilde and the ratio sigma = Gamma'/x.

    The stored callables are already normalized so that sigma integrates
    to -1; ``scale`` records the factor applied to the raw bump.
    """

    def __init__(self, name, gamma_f, gamma_p, gamma_pp, tilde, sigma,
                 tilde_over_x, scale, sigma_integral):
        self.name = name
        self.gamma_f = gamma_f
        self.gamma_p = gamma_p
        self.gamma_pp = gamma_pp
        self.tilde = tilde
        self.sigma = sigma
        self.tilde_over_x = tilde_over_x
        self.scale = float(scale)
        self.sigma_integral = float(sigma_integral)


def gaussian_perturbation():
    """Normalized Gaussian bump: Gamma = e^{-x^2}/(2 sqrt(pi)).

    For Gamma = c*e^{-x^2}: sigma = -2c e^{-x^2}, integral(sigma) = -2c sqrt(pi),
    so c = 1/(2 sqrt(pi)) gives integral -1 exactly.  Gtilde = erf(x)/4.
    """
    from scipy.special import erf

    s = 1.0 / (2.0 * math.sqrt(math.pi))

    def tilde_over_x(x):
        x = np.asarray(x, dtype=float)
        # erf(x)/x = (2/sqrt(pi)) (1 - x^2/3 + x^4/10 - x^6/42) near 0
        small = np.abs(x) < 1e-2
        xs = np.where(small, 1.0, x)
        series = (2.0 / math.sqrt(math.pi)) * (1.0 - x * x / 3.0
                  + x ** 4 / 10.0 - x ** 6 / 42.0)
        direct = erf(xs) / xs
        return s * (math.sqrt(math.pi) / 2.0) * np.where(small, series, direct)

    return PerturbationProfile(
        "gaussian",
        gamma_f=lambda x: s * np.exp(-np.asarray(x) ** 2),
        gamma_p=lambda x: -2.0 * s * np.asarray(x) * np.exp(-np.asarray(x) ** 2),
        gamma_pp=lambda x: s * (4.0 * np.asarray(x) ** 2 - 2.0) * np.exp(-np.asarray(x) ** 2),
        tilde=lambda x: s * (math.sqrt(math.pi) / 2.0) * erf(np.asarray(x)),
        sigma=lambda x: -2.0 * s * np.exp(-np.asarray(x) ** 2),
        tilde_over_x=tilde_over_x,
        scale=s,
        sigma_integral=-1.0,
    )


_PERTS = {"gaussian": gaussian_perturbation}


def perturbation_profile(name, **params):
    if name not in _PERTS:
        raise HypothesisError("unknown perturbation profile %r" % name)
    return _PERTS[name](**params)


class PerturbedFlow:
    """U_{m,gamma}(y) = U(y) + m*gamma^2*Gtilde(y/gamma), validated at birth.

    Immutable; evaluation is reentrant.  m = 0 or pert None degrades to the
    bare base.
    """

    def __init__(self, base, pert=None, m=0.0, gamma=0.1, check=True):
        self.base = base
        self.pert = pert
        self.m = float(m)
        self.gamma = float(gamma)
        if self.gamma <= 0.0:
            raise HypothesisError("gamma must be positive")
        if self.m < 0.0:
            raise HypothesisError("amplitude m must be nonnegative")
        if check:
            grid = np.linspace(-1.0, 1.0, ADMISSIBILITY_POINTS)
            up = self.u(grid, 1)
            if np.min(up) <= 0.0:
                raise HypothesisError(
                    "U' reaches %g: (m=%g, gamma=%g) destroys monotonicity"
                    % (float(np.min(up)), self.m, self.gamma))

    def _active(self):
        return self.pert is not None and self.m != 0.0

    def u(self, y, order=0):
        y = np.asarray(y, dtype=float)
        if order == 0:
            out = self.base.u(y)
            if self._active():
                out = out + self.m * self.gamma ** 2 * self.pert.tilde(y / self.gamma)
        elif order == 1:
            out = self.base.up(y)
            if self._active():
                out = out + self.m * self.gamma * self.pert.gamma_f(y / self.gamma)
        elif order == 2:
            out = self.base.upp(y)
            if self._active():
                out = out + self.m * self.pert.gamma_p(y / self.gamma)
        elif order == 3:
            out = self.base.uppp(y)
            if self._active():
                out = out + (self.m / self.gamma) * self.pert.gamma_pp(y / self.gamma)
        else:
            raise ValueError("derivative order must be 0..3")
        return out

    def u_range(self):
        return float(self.u(-1.0)), float(self.u(1.0))

    def with_m(self, m):
        return PerturbedFlow(self.base, self.pert, m, self.gamma)


def eval_flow(flow, y, order=0):
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) > 1.0 + 1e-14):
        raise ValueError("y outside [-1,1]")
    return flow.u(y, order)


class PotentialQ:
    """The ratio U''_{m,gamma}/U_{m,gamma} with its removable singularity.

    Near y = 0 both numerator and denominator vanish linearly; the series
    branch divides them by y first:
        num = U''(y)/y + (m/gamma) sigma(y/gamma)
        den = U(y)/y + m*gamma*Gtilde(y/gamma)/(y/gamma)
    """

    def __init__(self, flow):
        self.flow = flow
        self.q0 = float(self._series(np.asarray([0.0]))[0])

    def _series(self, y):
        f = self.flow
        num = f.base.upp_over_y(y)
        den = f.base.u_over_y(y)
        if f._active():
            x = y / f.gamma
            num = num + (f.m / f.gamma) * f.pert.sigma(x)
            den = den + f.m * f.gamma * f.pert.tilde_over_x(x)
        return num / den

    def eval(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        small = np.abs(y) < Y_SWITCH
        out = np.empty_like(y)
        if np.any(small):
            out[small] = self._series(y[small])
        big = ~small
        if np.any(big):
            out[big] = self.flow.u(y[big], 2) / self.flow.u(y[big], 0)
        return float(out[0]) if scalar else out

    __call__ = eval


def eval_potential(q, y):
    return q.eval(y)


class ValidationReport:
    def __init__(self):
        self.checks = []

    def add(self, name, passed, measured):
        self.checks.append((name, bool(passed), float(measured)))

    @property
    def all_pass(self):
        return all(p for _, p, _ in self.checks)

    def failures(self):
        return [(n, v) for n, p, v in self.checks if not p]

    def as_dict(self):
        return {
            "all_pass": self.all_pass,
            "checks": [{"name": n, "passed": p, "measured": v}
                       for n, p, v in self.checks],
        }


def validate(base, pert, m, gamma):
    """Hypothesis report for (base, pert, m, gamma); construction needs all-pass."""
    rep = ValidationReport()
    grid = np.linspace(-1.0, 1.0, ADMISSIBILITY_POINTS)

    rep.add("base.U(0)=0", abs(float(base.u(0.0))) <= 1e-12, float(base.u(0.0)))
    rep.add("base.U''(0)=0", abs(float(base.upp(0.0))) <= 1e-12, float(base.upp(0.0)))
    upmin = float(np.min(base.up(grid)))
    rep.add("base.monotone U'>=c0", upmin >= base.c0 - 1e-12, upmin)

    base_flow = PerturbedFlow(base, None, 0.0, gamma, check=False)
    qvals = PotentialQ(base_flow).eval(grid)
    rep.add("base.ratio U''/U <= 0", float(np.max(qvals)) <= 1e-12, float(np.max(qvals)))
    rep.add("base.ratio U''/U >= -C", float(np.min(qvals)) >= -base.ratio_bound - 1e-9,
            float(np.min(qvals)))
    if base.smoothness_order > 0:
        n_max = base.smoothness_order + 1
        if 2 * n_max > 5:
            raise HypothesisError("even-derivative pins beyond order 5 not tracked")
        worst = max(abs(base.taylor0[2 * n]) for n in range(1, n_max + 1))
        rep.add("base.even derivatives vanish", worst <= 1e-12, worst)

    if pert is not None:
        x = np.linspace(-8.0, 8.0, 4001)
        sig = pert.sigma(x)
        rep.add("pert.sigma < 0", float(np.max(sig)) < 0.0, float(np.max(sig)))
        rep.add("pert.sigma bounded", np.isfinite(np.min(sig)), float(np.min(sig)))
        rep.add("pert.sigma integral = -1",
                abs(pert.sigma_integral + 1.0) <= 1e-8, pert.sigma_integral)
        tox = float(np.max(np.abs(pert.tilde_over_x(x))))
        rep.add("pert.Gtilde/x bounded", np.isfinite(tox), tox)

    try:
        flow = PerturbedFlow(base, pert, m, gamma, check=False)
        upmin = float(np.min(flow.u(grid, 1)))
        rep.add("flow.monotone U'_{m,gamma} > 0", upmin > 0.0, upmin)
    except HypothesisError:
        rep.add("flow.monotone U'_{m,gamma} > 0", False, float("nan"))
    return rep


def _window(y, inner, outer):
    """C^2 plateau window: 1 on |y|<=inner, 0 on |y|>=outer, quintic in between."""
    t = (np.abs(y) - inner) / (outer - inner)
    t = np.clip(t, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def sobolev_distance(flow_a, flow_b, s):
    """H^s(-1,1) norm of U_{m1,gamma} - U_{m2,gamma} for flows sharing base and pert.

    The difference is (m1-m2)*gamma^2*Gtilde(y/gamma), which extends smoothly
    off the channel; a plateau cutoff (identically 1 on [-1,1]) and an FFT
    multiplier give the extension norm.
    """
    if flow_a.base.name != flow_b.base.name or flow_a.gamma != flow_b.gamma:
        raise ValueError("flows must share base and gamma")
    pa = flow_a.pert.name if flow_a.pert else None
    pb = flow_b.pert.name if flow_b.pert else None
    if pa != pb:
        raise ValueError("flows must share the perturbation profile")
    dm = flow_a.m - flow_b.m
    if dm == 0.0 or flow_a.pert is None:
        return 0.0
    L, M = 8.0, 8192
    y = -L / 2.0 + L * np.arange(M) / M
    delta = dm * flow_a.gamma ** 2 * flow_a.pert.tilde(y / flow_a.gamma)
    f = delta * _window(y, 1.0, 3.0)
    fhat = np.fft.fft(f)
    xi = 2.0 * math.pi * np.fft.fftfreq(M, d=L / M)
    norm_sq = (L / M ** 2) * np.sum((1.0 + xi ** 2) ** s * np.abs(fhat) ** 2)
    return float(math.sqrt(norm_sq))
