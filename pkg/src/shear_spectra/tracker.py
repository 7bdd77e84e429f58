"""Unstable-branch continuation and zero-count scans.

The eigenvalue condition at fixed lam = -k^2 is a zero of the full
Wronskian c -> Wf(c).  The branch c(m) grows out of (m_*, 0); away from
the real axis, zeros are counted by the argument principle over rectangle
tiles, and the strip |Im c| < eps_scan is covered by the real-axis
boundary-limit indicator A^2 + B^2.
"""
import math

import numpy as np

from .profiles import PerturbedFlow
from .rayleigh import ConvergenceError
from .threshold import find_mstar
from .wronskian import (boundary_limits, full_from_modified, full_wronskian,
                        wronskian_probes)

NEWTON_TOL = 1e-10
NEWTON_CAP = 12
STEP_INITIAL = 0.02       # of m_*
STEP_MIN = 1e-4           # of m_*
STEP_MAX = 0.1            # of m_*
EPS_SCAN_FLOOR = 0.02
EDGE_START = 33
EDGE_CAP = 1025


class BranchSample:
    __slots__ = ("m", "c", "newton_residual", "ratio")

    def __init__(self, m, c, newton_residual, ratio):
        self.m = float(m)
        self.c = complex(c)
        self.newton_residual = float(newton_residual)
        self.ratio = float(ratio)

    def row(self):
        return (self.m, self.c.real, self.c.imag, self.newton_residual,
                self.ratio)


class ModeBranch:
    """c(m) along the unstable branch; the anchor sample is (m_*, 0)."""

    def __init__(self, gamma, m_star, samples):
        self.gamma = float(gamma)
        self.m_star = float(m_star)
        self.samples = list(samples)

    def rows(self):
        return [s.row() for s in self.samples]

    def ratios(self):
        return [s.ratio for s in self.samples if math.isfinite(s.ratio)]


class ZeroCount:
    """Per-lam tile windings plus the real-axis indicator sweep."""

    def __init__(self, region, windings, real_axis, counts):
        self.region = region          # {lam: [rects, upper then mirrored]}
        self.windings = windings      # {lam: [winding per rect]}
        self.real_axis = real_axis    # {lam: {"c_r", "indicator", "min"}}
        self.counts = counts          # {lam: zero count}

    def total(self):
        return sum(self.counts.values())

    def as_dict(self):
        out = {"lams": {}, "total": self.total()}
        for lam in sorted(self.counts):
            r = self.real_axis[lam]
            out["lams"]["%g" % lam] = {
                "tiles": [list(t) for t in self.region[lam]],
                "windings": list(self.windings[lam]),
                "real_axis": {"c_r": list(r["c_r"]),
                              "indicator": list(r["indicator"]),
                              "min": r["min"]},
                "count": int(self.counts[lam]),
            }
        return out


def newton_root(flow, c0, lam=-1.0, tol=NEWTON_TOL, rtol=1e-12,
                cap=NEWTON_CAP):
    """Root of the full Wronskian near c0: Newton in the two real unknowns
    (Re c, Im c) on (Re Wf, Im Wf), Jacobian by central differences.

    Returns (c, residual) with residual = |Wf| / |d Wf / d c_i|, a
    c-space distance.  Purely-imaginary roots are not imposed; whatever
    Newton converges to is reported.
    """
    c = complex(c0)
    sign = 1.0 if c.imag >= 0.0 else -1.0
    for _ in range(cap):
        if c.imag == 0.0:
            c += 1e-8j * sign
        w0 = full_wronskian(flow, c, lam, rtol).value
        h = 1e-3 * max(abs(c.imag), 1e-3)
        d_cr = (full_wronskian(flow, c + h, lam, rtol).value
                - full_wronskian(flow, c - h, lam, rtol).value) / (2.0 * h)
        d_ci = (full_wronskian(flow, c + 1j * h, lam, rtol).value
                - full_wronskian(flow, c - 1j * h, lam, rtol).value) / (2.0 * h)
        scale = abs(d_ci)
        if scale == 0.0:
            raise ConvergenceError("flat Wronskian at c=%s" % c)
        residual = abs(w0) / scale
        if residual <= tol:
            return c, residual
        jac = np.array([[d_cr.real, d_ci.real], [d_cr.imag, d_ci.imag]])
        try:
            step = np.linalg.solve(jac, [-w0.real, -w0.imag])
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Wronskian Jacobian at c=%s" % c)
        if not np.all(np.isfinite(step)) or np.hypot(*step) > 0.5:
            raise ConvergenceError("Newton step diverged at c=%s" % c)
        c = complex(c.real + step[0], c.imag + step[1])
    raise ConvergenceError("Newton failed to reach %g near c=%s" % (tol, c))


def _predict(samples, gamma, m_star, m_next, flow_prev):
    """Tangent guess for the next root: secant when two branch points
    exist, the probe-derivative formula dc/dm = -i d_m W / d_ci W inside
    the thin strip, else the small-gap law c ~ i gamma (m - m_*)."""
    live = [s for s in samples if s.c.imag > 0.0]
    if len(live) >= 2:
        a, b = live[-2], live[-1]
        return b.c + (b.c - a.c) * (m_next - b.m) / (b.m - a.m)
    if live and 0.0 < live[-1].c.imag <= 0.1 * gamma:
        probes = wronskian_probes(flow_prev, live[-1].c.imag)
        slope = -1j * probes.d_m / probes.d_ci
        return live[-1].c + slope * (m_next - live[-1].m)
    return 1j * gamma * (m_next - m_star)


def continue_branch(base, pert, gamma, m_max=None, steps=60, m_star=None,
                    m_values=None, lam=-1.0, tol=NEWTON_TOL):
    """Continue the unstable branch from (m_*, c=0) toward larger m.

    The step is adaptive in [1e-4, 0.1] m_*, halving whenever the
    corrector fails; explicit m_values are landed on exactly (intermediate
    stepping stones are recorded too).  The branch is reported as far as
    the corrector sustains it; losing it raises with the last good sample
    in the message.
    """
    gamma = float(gamma)
    if m_star is None:
        m_star = find_mstar(base, pert, gamma).m_star
    if m_values is not None:
        targets = sorted(float(m) for m in m_values)
        if targets and targets[0] <= m_star:
            raise ValueError("branch targets must exceed m_star")
        m_max = targets[-1] if targets else m_star
    else:
        m_max = float(m_max) if m_max is not None else 1.1 * m_star
        targets = [m_max]
    samples = [BranchSample(m_star, 0j, float("nan"), float("nan"))]
    flow_prev = PerturbedFlow(base, pert, m_star, gamma)
    m_prev = m_star
    step = STEP_INITIAL * m_star
    budget = steps
    queue = list(targets)
    while queue and budget > 0:
        target = queue[0]
        m_next = min(m_prev + step, target)
        c_pred = _predict(samples, gamma, m_star, m_next, flow_prev)
        flow = PerturbedFlow(base, pert, m_next, gamma)
        try:
            c_new, res = newton_root(flow, c_pred, lam, tol)
        except ConvergenceError:
            step *= 0.5
            budget -= 1
            if step < STEP_MIN * m_star:
                last = samples[-1]
                raise ConvergenceError(
                    "branch lost at m=%.8f; last good sample m=%.8f c=%s"
                    % (m_next, last.m, last.c))
            continue
        if c_new.imag < 0.0:
            c_new = c_new.conjugate()
        ratio = c_new.imag / (gamma * (m_next - m_star))
        samples.append(BranchSample(m_next, c_new, res, ratio))
        flow_prev = flow
        m_prev = m_next
        budget -= 1
        if m_next >= target - 1e-14:
            queue.pop(0)
        step = min(step * 1.3, STEP_MAX * m_star)
    return ModeBranch(gamma, m_star, samples)


def howard_region(flow):
    """Center and radius of the scan disk from the wall values."""
    u_lo = float(flow.u(-1.0))
    u_hi = float(flow.u(1.0))
    return 0.5 * (u_lo + u_hi), (u_hi - u_lo) / math.sqrt(2.0)


class _Retile(Exception):
    pass


def _w_eval(flow, c, lam, rtol):
    # same analytic function two ways: phi^-(1) by shooting away from the
    # axis, phi(-1) phi(1) int 1/phi^2 on the graded mesh inside the thin
    # layer where adaptive steppers crawl; the mesh needs a critical point,
    # so Re c outside the range of the flow always shoots
    if abs(c.imag) < 5e-3:
        u_lo, u_hi = flow.u_range()
        if u_lo < c.real < u_hi:
            return full_from_modified(flow, c, lam, tol=1e-8,
                                      error_estimate=False).value
    return full_wronskian(flow, c, lam, rtol).value


def _edge_values(flow, lam, za, zb, n, rtol, memo):
    # linspace nodes are exact dyadics, so doubling n reuses every old
    # point through the float-keyed memo
    ts = np.linspace(0.0, 1.0, n)
    vals = []
    for t in ts:
        v = memo.get(t)
        if v is None:
            v = _w_eval(flow, za + (zb - za) * t, lam, rtol)
            memo[t] = v
        vals.append(v)
    return vals


def _rectangle_winding(flow, rect, lam, rtol=1e-12):
    """Winding of the full Wronskian around the rectangle boundary: the
    accumulated argument (first differences along the contour) over 2 pi.
    Edges are refined until every increment is below pi/2."""
    x0, x1, y0, y1 = rect
    corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1),
               complex(x0, y1), complex(x0, y0)]
    total = 0.0
    all_abs = []
    for za, zb in zip(corners[:-1], corners[1:]):
        n = EDGE_START
        memo = {}
        while True:
            vals = _edge_values(flow, lam, za, zb, n, rtol, memo)
            incs = np.angle(np.asarray(vals[1:]) / np.asarray(vals[:-1]))
            if float(np.max(np.abs(incs))) < 0.5 * math.pi or n >= EDGE_CAP:
                break
            n = 2 * n - 1
        all_abs.extend(abs(v) for v in vals)
        total += float(np.sum(incs))
    if min(all_abs) < 1e-6 * np.median(all_abs):
        raise _Retile()
    winding = total / (2.0 * math.pi)
    nearest = round(winding)
    if abs(winding - nearest) > 0.05:
        raise ConvergenceError(
            "winding %.3f too far from an integer on tile %s" % (winding, rect))
    return int(nearest)


def _row_windings(flow, lam, center, radius, eps_scan, tiles, rtol):
    """Windings over one row of tiles covering the upper half-disk.

    When a contour passes within 1e-6 of a zero the whole row is rebuilt
    with asymmetric padding, which moves every interior edge (symmetric
    padding would leave the middle edge pinned to the center, exactly
    where symmetric flows put their roots).
    """
    top = 1.05 * radius + eps_scan
    for k, ci_factor in enumerate((1.0, 1.17, 0.87, 1.31)):
        pad_l = 0.023 * k * radius
        pad_r = 0.061 * k * radius
        xs = np.linspace(center - radius - pad_l, center + radius + pad_r,
                         tiles + 1)
        rects = [(float(x0), float(x1), eps_scan * ci_factor, top)
                 for x0, x1 in zip(xs[:-1], xs[1:])]
        try:
            return rects, [_rectangle_winding(flow, r, lam, rtol)
                           for r in rects]
        except _Retile:
            continue
    raise ConvergenceError("contours kept hitting a zero at lam=%g" % lam)


def stability_scan(flow, lam_list=(-1.0, -4.0, -9.0), eps_scan=EPS_SCAN_FLOOR,
                   tiles=4, rtol=1e-12, tol=1e-10):
    """Count Wronskian zeros over the scan disk, per lam.

    Rectangles tile the upper half-strip {Im c >= eps_scan} over the
    disk's bounding box; lower-half counts follow from conjugate symmetry
    and are reported on mirrored tiles.  The strip |Im c| < eps_scan is
    covered by the A^2 + B^2 indicator on a 100-point real-axis grid, so
    a scan hunting a just-bifurcated pair must set eps_scan below the
    branch's |Im c| at that m.
    """
    if eps_scan < 1e-3:
        raise ValueError("eps_scan below the 1e-3 guard")
    center, radius = howard_region(flow)
    u_lo, u_hi = flow.u_range()
    grid = np.linspace(u_lo, u_hi, 102)[1:-1]
    region, windings, real_axis, counts = {}, {}, {}, {}
    for lam in lam_list:
        lam = float(lam)
        rects, per_tile = _row_windings(flow, lam, center, radius, eps_scan,
                                        tiles, rtol)
        mirrored = [(x0, x1, -y1, -y0) for x0, x1, y0, y1 in rects]
        region[lam] = rects + mirrored
        windings[lam] = per_tile + per_tile[:]
        # depth-4 extrapolation resolves the indicator to ~1e-6, plenty to
        # separate a zero (< 1e-12) from the generic O(1) floor
        indicator = np.array([boundary_limits(flow, cr, lam, tol=1e-8,
                                              depth=4,
                                              error_estimate=False).indicator
                              for cr in grid])
        j = int(np.argmin(indicator))
        if indicator[j] < 1e-3:
            # confirm a near-zero at full depth before reporting it
            indicator[j] = boundary_limits(flow, grid[j], lam,
                                           tol=tol).indicator
        real_axis[lam] = {"c_r": grid.tolist(),
                          "indicator": indicator.tolist(),
                          "min": float(np.min(indicator))}
        counts[lam] = int(2 * sum(per_tile))
    return ZeroCount(region, windings, real_axis, counts)
