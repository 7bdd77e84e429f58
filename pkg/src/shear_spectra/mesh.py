"""Composite Gauss-Legendre meshes graded toward a marked interior point.

Panels double in width away from the marked point (the critical layer of a
Rayleigh solve), starting at a floor width that resolves the sharpest scale
of the integrands, min(|c_i|, gamma)/10, and capped at 0.3 so the outermost
panels still resolve poles sitting |c_i| off the axis.  Each panel carries
16 nodes; a reference matrix turns nodal samples into the Legendre
antiderivative, giving spectrally accurate running integrals from the marked
point outward.
"""

import math

import numpy as np
from numpy.polynomial import legendre as L

__all__ = ["GradedMesh", "graded_mesh", "uniform_panels"]

NODES_PER_PANEL = 16
GRADE_RATIO = 2.0
PANEL_CAP = 64
FLOOR_MIN = 1e-9
WIDTH_CAP = 0.3

_ref_cache = {}


def _reference(n):
    """GL nodes/weights on [-1,1] and the cumulative matrix K[i,j] = int_{-1}^{x_i} l_j."""
    if n in _ref_cache:
        return _ref_cache[n]
    x, w = L.leggauss(n)
    K = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        # Legendre coefficients of the cardinal function through the GL nodes
        coeffs = np.array([(2 * k + 1) / 2.0 * np.sum(w * L.legval(x, _unit(k, n)) * e)
                           for k in range(n)])
        anti = L.legint(coeffs, lbnd=-1.0)
        K[:, j] = L.legval(x, anti)
    _ref_cache[n] = (x, w, K)
    return x, w, K


def _unit(k, n):
    c = np.zeros(n)
    c[k] = 1.0
    return c


def _edges_outward(start, stop, floor, ratio, cap):
    """Panel edges from start toward stop with geometrically growing widths."""
    width = abs(stop - start)
    if width <= floor * 1e-12:
        return [start, stop]
    sign = 1.0 if stop > start else -1.0
    edges = [start]
    w = floor
    while len(edges) <= cap:
        remaining = abs(stop - edges[-1])
        if remaining <= w * (1.0 + ratio):
            break
        edges.append(edges[-1] + sign * w)
        w *= ratio
    edges.append(stop)
    return edges


class GradedMesh:
    def __init__(self, panels, center, n_nodes=NODES_PER_PANEL):
        self.center = float(center)
        self.panels = [(float(a), float(b)) for a, b in panels]
        xr, wr, K = _reference(n_nodes)
        self._xr, self._wr, self._K = xr, wr, K
        nodes, weights = [], []
        for a, b in self.panels:
            h = 0.5 * (b - a)
            nodes.append(0.5 * (a + b) + h * xr)
            weights.append(h * wr)
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self.n_nodes = n_nodes
        # panels sorted ascending; split index = first panel at/after center
        self._split = sum(1 for a, b in self.panels if b <= self.center + 1e-15)

    def integrate(self, f_values):
        return np.sum(self.weights * f_values, axis=-1)

    def cumulative_from_center(self, f):
        """F_i = integral from the marked center to node i, all nodes at once."""
        n = self.n_nodes
        out = np.empty_like(np.asarray(f))
        full = np.array([np.sum(self.weights[p * n:(p + 1) * n] * f[p * n:(p + 1) * n])
                         for p in range(len(self.panels))])
        # right of center: accumulate forward
        acc = 0.0
        for p in range(self._split, len(self.panels)):
            a, b = self.panels[p]
            h = 0.5 * (b - a)
            local = h * (self._K @ f[p * n:(p + 1) * n])
            out[p * n:(p + 1) * n] = acc + local
            acc += full[p]
        # left of center: accumulate backward, flipping orientation
        acc = 0.0
        for p in range(self._split - 1, -1, -1):
            a, b = self.panels[p]
            h = 0.5 * (b - a)
            local = h * (self._K @ f[p * n:(p + 1) * n])
            out[p * n:(p + 1) * n] = -(acc + (full[p] - local))
            acc += full[p]
        return out

    def cumulative_endpoints(self, f):
        """(F(lo), F(hi)) for F(y) = integral from the marked center to y."""
        n = self.n_nodes
        full = [np.sum(self.weights[p * n:(p + 1) * n] * f[p * n:(p + 1) * n])
                for p in range(len(self.panels))]
        return -sum(full[:self._split]), sum(full[self._split:])

    def refined(self):
        halves = []
        for a, b in self.panels:
            mid = 0.5 * (a + b)
            halves.append((a, mid))
            halves.append((mid, b))
        return GradedMesh(halves, self.center, self.n_nodes)

    @property
    def size(self):
        return self.nodes.size


def graded_mesh(y_c, scale, lo=-1.0, hi=1.0, ratio=GRADE_RATIO, cap=PANEL_CAP,
                n_nodes=NODES_PER_PANEL):
    """Mesh on [lo,hi] whose panels grow geometrically away from y_c.

    scale sets the floor panel width, scale/10 (clamped away from zero so the
    doubling always reaches the boundary inside the panel cap).
    """
    if not lo < y_c < hi:
        raise ValueError("marked point must be interior to the interval")
    floor = max(abs(scale) / 10.0, FLOOR_MIN)
    left = _edges_outward(y_c, lo, floor, ratio, cap)
    right = _edges_outward(y_c, hi, floor, ratio, cap)
    edges = sorted(set(left + right))
    panels = []
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(math.ceil((b - a) / WIDTH_CAP - 1e-12)))
        sub = np.linspace(a, b, k + 1)
        panels.extend(zip(sub[:-1], sub[1:]))
    return GradedMesh(panels, y_c, n_nodes)


def uniform_panels(lo, hi, n_panels, center=None, n_nodes=NODES_PER_PANEL):
    edges = np.linspace(lo, hi, n_panels + 1)
    panels = list(zip(edges[:-1], edges[1:]))
    return GradedMesh(panels, lo if center is None else center, n_nodes)
