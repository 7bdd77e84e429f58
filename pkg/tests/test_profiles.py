import math

import numpy as np
import pytest

from shear_spectra import (
    HypothesisError,
    PerturbedFlow,
    PotentialQ,
    couette,
    cubic,
    eval_flow,
    eval_potential,
    gaussian_perturbation,
    sine,
    sobolev_distance,
    tabulated,
    validate,
)

GRID = np.linspace(-1.0, 1.0, 201)


def test_couette_is_linear():
    base = couette()
    assert np.array_equal(base.u(GRID), GRID)
    assert np.all(base.up(GRID) == 1.0)
    assert np.all(base.upp(GRID) == 0.0)


@pytest.mark.parametrize("base", [cubic(), sine(1.0), sine(1.4)])
def test_base_derivatives_are_consistent(base):
    h = 1e-5
    fd_up = (base.u(GRID + h) - base.u(GRID - h)) / (2.0 * h)
    fd_upp = (base.up(GRID + h) - base.up(GRID - h)) / (2.0 * h)
    assert np.max(np.abs(fd_up - base.up(GRID))) < 1e-9
    assert np.max(np.abs(fd_upp - base.upp(GRID))) < 1e-9


def test_sine_steepness_guard():
    with pytest.raises(HypothesisError):
        sine(1.7)
    with pytest.raises(HypothesisError):
        sine(0.0)


def test_gaussian_perturbation_normalization():
    pert = gaussian_perturbation()
    x = np.linspace(-6.0, 6.0, 1201)
    assert pert.sigma_integral == -1.0
    # quadrature agrees with the stored integral
    measured = np.trapezoid(pert.sigma(x), x)
    assert abs(measured + 1.0) < 1e-10
    # Gtilde is odd and Gamma positive
    assert pert.tilde(0.0) == 0.0
    assert np.max(np.abs(pert.tilde(x) + pert.tilde(-x))) == 0.0
    assert np.min(pert.gamma_f(x)) > 0.0
    assert np.max(pert.sigma(x)) < 0.0
    # Gtilde / x continuous through zero
    assert abs(pert.tilde_over_x(0.0) - pert.gamma_f(0.0)) < 1e-12


def test_perturbed_flow_derivative_identities():
    flow = PerturbedFlow(couette(), gaussian_perturbation(), 2.0, 0.1)
    h = 1e-6
    y = np.linspace(-0.9, 0.9, 101)
    fd1 = (flow.u(y + h) - flow.u(y - h)) / (2.0 * h)
    fd2 = (flow.u(y + h, 1) - flow.u(y - h, 1)) / (2.0 * h)
    fd3 = (flow.u(y + h, 2) - flow.u(y - h, 2)) / (2.0 * h)
    assert np.max(np.abs(fd1 - flow.u(y, 1))) < 1e-8
    assert np.max(np.abs(fd2 - flow.u(y, 2))) < 1e-7
    assert np.max(np.abs(fd3 - flow.u(y, 3))) < 1e-5


def test_construction_guards():
    with pytest.raises(HypothesisError, match="nonnegative"):
        PerturbedFlow(couette(), gaussian_perturbation(), -1.0, 0.1)
    with pytest.raises(HypothesisError, match="positive"):
        PerturbedFlow(couette(), gaussian_perturbation(), 1.0, 0.0)
    with pytest.raises(ValueError, match="order"):
        PerturbedFlow(couette(), None).u(0.5, 4)


def test_validate_builtin_flow_passes():
    report = validate(couette(), gaussian_perturbation(), 3.14, 0.1)
    assert report.all_pass
    assert report.failures() == []
    payload = report.as_dict()
    assert payload["all_pass"] is True
    assert {c["name"] for c in payload["checks"]} >= {
        "base.U(0)=0", "pert.sigma integral = -1",
        "flow.monotone U'_{m,gamma} > 0"}


def test_validate_flags_nonmonotone_flow():
    report = validate(couette(), gaussian_perturbation(), -40.0, 0.1)
    assert not report.all_pass
    assert any(name == "flow.monotone U'_{m,gamma} > 0"
               for name, _ in report.failures())


def test_tabulated_rejects_nonmonotone_table(tmp_path):
    path = tmp_path / "ysq.csv"
    y = np.linspace(-1.0, 1.0, 201)
    path.write_text("".join("%.17g,%.17g\n" % (a, a * a) for a in y))
    with pytest.raises(HypothesisError, match="monotone"):
        tabulated(str(path))


def test_tabulated_reproduces_cubic(tmp_path):
    path = tmp_path / "cubic.csv"
    y = np.linspace(-1.0, 1.0, 25)
    path.write_text("# y, U\n" + "".join(
        "%.17g,%.17g\n" % (a, a - a ** 3 / 6.0) for a in y))
    base = tabulated(str(path))
    ref = cubic()
    assert np.max(np.abs(base.u(GRID) - ref.u(GRID))) < 1e-11
    assert np.max(np.abs(base.upp(GRID) - ref.upp(GRID))) < 1e-7
    assert validate(base, None, 0.0, 0.1).all_pass


def test_potential_center_value_closed_form():
    # U'' / U at y = 0 for couette + gaussian:
    # U''(y) -> -2 s m y / gamma with s = Gamma(0) = 1/(2 sqrt(pi)),
    # U(y) -> (1 + m gamma s) y, so the ratio tends to their quotient
    m, gamma = 2.0, 0.1
    s = 1.0 / (2.0 * math.sqrt(math.pi))
    expected = -2.0 * s * m / gamma / (1.0 + m * gamma * s)
    flow = PerturbedFlow(couette(), gaussian_perturbation(), m, gamma)
    q = PotentialQ(flow)
    assert abs(float(q.eval(0.0)) - expected) < 1e-10 * abs(expected)


def test_potential_series_matches_quotient_at_switch():
    flow = PerturbedFlow(couette(), gaussian_perturbation(), 2.0, 0.1)
    q = PotentialQ(flow)
    below = float(q.eval(0.999e-3))
    above = float(q.eval(1.001e-3))
    assert abs(below - above) < 1e-8 * abs(above)


def test_eval_helpers_delegate():
    flow = PerturbedFlow(cubic(), None, 0.0, 0.1, check=False)
    assert np.array_equal(eval_flow(flow, GRID, 1), flow.u(GRID, 1))
    q = PotentialQ(flow)
    assert np.array_equal(eval_potential(q, GRID), q.eval(GRID))


def test_center_ratios_from_taylor_data():
    assert float(couette().u_over_y(0.0)) == 1.0
    assert float(couette().upp_over_y(0.0)) == 0.0
    # cubic has U'''(0) = -1
    assert abs(float(cubic().upp_over_y(0.0)) + 1.0) < 1e-12


def test_sobolev_distance_scales_linearly_in_amplitude():
    base, pert = couette(), gaussian_perturbation()
    f0 = PerturbedFlow(base, pert, 3.0, 0.1)
    f1 = PerturbedFlow(base, pert, 3.1, 0.1)
    f2 = PerturbedFlow(base, pert, 3.2, 0.1)
    d1 = sobolev_distance(f1, f0, 1)
    d2 = sobolev_distance(f2, f0, 1)
    assert d1 > 0.0
    assert abs(d2 / d1 - 2.0) < 1e-12
    assert sobolev_distance(f0, f0, 1) == 0.0


def test_sobolev_distance_requires_shared_family():
    f_cou = PerturbedFlow(couette(), gaussian_perturbation(), 1.0, 0.1)
    f_cub = PerturbedFlow(cubic(), gaussian_perturbation(), 1.0, 0.1)
    with pytest.raises(ValueError):
        sobolev_distance(f_cou, f_cub, 1)
    f_other = PerturbedFlow(couette(), gaussian_perturbation(), 1.0, 0.05)
    with pytest.raises(ValueError):
        sobolev_distance(f_cou, f_other, 1)


def test_flow_range_and_with_m():
    flow = PerturbedFlow(couette(), gaussian_perturbation(), 2.0, 0.1)
    lo, hi = flow.u_range()
    assert lo == float(flow.u(-1.0))
    assert hi == float(flow.u(1.0))
    bumped = flow.with_m(2.5)
    assert bumped.m == 2.5
    assert bumped.gamma == flow.gamma
    assert flow.m == 2.0
