"""Reference values shared across the test suite.

Closed forms are exact.  Everything else was computed once with the
shipped solvers at the stated resolution and frozen here; the pinning
tolerances reflect how those numbers were measured, nothing looser.
"""
import math

# critical amplitudes m_* for couette + gaussian, bisection at n = 2048,
# eigenvalue residual <= 1e-8
M_STAR = {
    0.2: 3.8622035581,
    0.1: 3.1437982054,
    0.05: 2.8657474458,
    0.025: 2.7416571282,
}

# unstable branch c(m) at gamma = 0.1, lam = -1, keyed by m / m_*;
# newton residuals <= 2.2e-12, real parts zero to 1e-12
BRANCH_C = {
    1.02: 0.00107258j,
    1.05: 0.00265295j,
    1.10: 0.00521522j,
    1.20: 0.01009650j,
    1.50: 0.02318057j,
    2.00: 0.04140006j,
}

# map closed forms from phi1 = sinh(sy)/(sy), s = sqrt(-lam)
MAP_COUETTE_LAM1 = 2.0 * (1.0 / math.tanh(1.0) - 1.0)      # 0.6260706...
MAP_COUETTE_LAM4 = 2.0 * (2.0 / math.tanh(2.0) - 1.0)      # 2.1492589...

# amplitude at which the point-mass problem reaches lam: 2 s coth s
M_DELTA_LAM1 = 2.0 / math.tanh(1.0)
M_DELTA_LAM4 = 4.0 / math.tanh(2.0)

# boundary constant of the amplitude map (couette closed form gives 2);
# the cubic value is a quadrature result at tol 1e-12
MAP_OFFSET_COUETTE = 2.0
MAP_OFFSET_CUBIC = 1.269064080154853

SINH2 = math.sinh(2.0)

# mildest unstable flow in the built-in family: couette + gaussian at
# gamma = 0.6, lambda = -1.00000025 by bisection on the amplitude
GAMMA_MILD = 0.6
M_MILD = 20.806174
