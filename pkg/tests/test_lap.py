import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lapscatter.errors import ConfigError, EdgeOfSpectrumError, LAPViolation, ResonanceError
from lapscatter.lap import (
    BoundaryResolvent, boundary_value, check_psd, perturbed_boundary_value, richardson,
    resonance_condition, sandwiched_resolvent, scan_regular_points, windowed_boundary_value,
)
from lapscatter.model import Perturbation, build_model, build_rigging, rank_one, site_potential

# QUADPACK Cauchy-weight principal value (tests/oracles.py): decay weight
# 1/(1+|x|), four orthonormal Legendre directions on [0, 1], lam = 0.3.
T_DECAY_M4_AT_03 = np.array([
    [-0.29340196459925555 + 1.8589305642543152j, 1.9353256514594517 - 1.2879048740124621j,
     -1.933824048613037 - 1.080740727852419j, -0.2394839375762242 + 2.164037910123713j],
    [1.9353256514594517 - 1.2879048740124621j, -2.0230667762882986 + 0.8922866708420713j,
     1.5206667331693842 + 0.7487591401797434j, 0.12401474462228547 - 1.4992894439357771j],
    [-1.933824048613037 - 1.080740727852419j, 1.5206667331693842 + 0.7487591401797434j,
     0.26079430000634257 + 0.6283185307179583j, 0.35813646656372167 - 1.2581233269600325j],
    [-0.2394839375762242 + 2.164037910123713j, 0.12401474462228547 - 1.4992894439357771j,
     0.35813646656372167 - 1.2581233269600325j, -1.1212850525656481 + 2.5192227006774477j],
])
# Same oracle, m = 2 at lam = 0.5: the strength that makes 1 + v T0[1, 1] vanish.
RESONANT_STRENGTH = 1.465773098926071


@pytest.fixture(scope="module")
def friedrichs():
    model = build_model("quadrature", (0.0, 1.0), N=64)
    return model, build_rigging(model, "unit", 1)


@pytest.fixture(scope="module")
def lattice():
    model = build_model("lattice", L=40)
    return model, build_rigging(model, "decay", 5)


def test_off_axis_matches_antiderivative(friedrichs):
    z = 0.5 + 0.5j
    T = sandwiched_resolvent(*friedrichs, z)
    assert abs(T[0, 0] - np.log((1 - z) / (-z))) <= 1e-12


@pytest.mark.parametrize("z", [0.5, 0.5 - 1e-3j, 0.2 - 1j])
def test_off_axis_rejects_closed_lower_half_plane(friedrichs, z):
    with pytest.raises(ConfigError):
        sandwiched_resolvent(*friedrichs, z)


def test_off_axis_hermitian_symmetry(friedrichs, lattice):
    # T(z)* = T(conj z); the lower half plane value comes from the antiderivative
    model, rig = friedrichs
    z = 0.3 + 0.2j
    T = sandwiched_resolvent(model, rig, z)
    lower = np.log((1 - z.conjugate()) / (-z.conjugate()))
    assert abs(T.conj().T[0, 0] - lower) <= 1e-12
    model, rig = lattice
    T = sandwiched_resolvent(model, rig, z)
    assert np.max(np.abs(T - T.T)) <= 1e-12


def test_off_axis_ignores_perturbation(lattice):
    model, rig = lattice
    a = sandwiched_resolvent(model, rig, 0.4 + 0.1j)
    site_potential(rig, {0: 3.0})
    assert np.array_equal(a, sandwiched_resolvent(model, rig, 0.4 + 0.1j))


def test_friedrichs_values(friedrichs):
    model, rig = friedrichs
    assert abs(boundary_value(model, rig, 0.5).T[0, 0] - 1j * math.pi) <= 1e-8
    assert abs(boundary_value(model, rig, 0.25).T[0, 0] - (math.log(3) + 1j * math.pi)) <= 1e-8


def test_lattice_single_site_center():
    model = build_model("lattice", L=20)
    rig = build_rigging(model, "unit", 1, sites=[0])
    assert abs(boundary_value(model, rig, 0.0).T[0, 0] - 0.5j) <= 1e-12


def test_decay_weight_against_cauchy_oracle():
    model = build_model("quadrature", (0.0, 1.0), N=64)
    rig = build_rigging(model, "decay", 4)
    T = boundary_value(model, rig, 0.3).T
    assert np.max(np.abs(T - T_DECAY_M4_AT_03)) <= 1e-8


@pytest.mark.parametrize("m", [1, 2, 4])
def test_plemelj_agrees_with_extrapolation(m):
    model = build_model("quadrature", (0.0, 1.0), N=64)
    rig = build_rigging(model, "decay", m)
    for lam in np.linspace(0.05, 0.95, 25):
        a = boundary_value(model, rig, lam).T
        b = boundary_value(model, rig, lam, method="extrapolation")
        assert np.max(np.abs(a - b.T)) <= 1e-6
        assert b.converged


def test_cross_check_records_disagreement(friedrichs):
    bv = boundary_value(*friedrichs, 0.4, cross_check=True)
    assert bv.converged and bv.residual < 1e-7
    assert "extrapolation_tail" in bv.info


def test_boundary_value_invariants(lattice):
    for lam in np.linspace(-1.9, 1.9, 9):
        bv = boundary_value(*lattice, lam)
        assert np.max(np.abs(bv.ImT - (bv.T - bv.T.conj().T) / 2j)) <= 1e-10
        assert bv.min_im_eig() >= -1e-10
        assert np.array_equal(bv.lower(), bv.T.conj().T)


@pytest.mark.parametrize("lam", [0.0, 1.0, 0.01, 0.995])
def test_edge_margin(friedrichs, lam):
    with pytest.raises(EdgeOfSpectrumError, match="edge-of-spectrum"):
        boundary_value(*friedrichs, lam)


def test_unknown_method(friedrichs):
    with pytest.raises(ConfigError):
        boundary_value(*friedrichs, 0.5, method="guess")


def test_herglotz_off_axis():
    model = build_model("quadrature", (0.0, 1.0), N=64)
    rig = build_rigging(model, "decay", 4)
    for lam in (0.2, 0.5, 0.8):
        for y in (1.0, 0.1, 0.01):
            T = sandwiched_resolvent(model, rig, lam + 1j * y)
            check_psd((T - T.conj().T) / 2j)


def test_check_psd_flags_violation():
    with pytest.raises(LAPViolation):
        check_psd(np.diag([1.0, -1e-6]))
    assert np.array_equal(check_psd(np.diag([1.0, -1e-12])), np.diag([1.0, -1e-12]))


def test_richardson_removes_polynomial_error():
    y = 0.1 * 2.0 ** -np.arange(6)
    vals = 2.0 + 3 * y - 5 * y**2 + y**3
    X, tail = richardson(vals)
    assert abs(X - 2.0) <= 1e-12 and tail <= 1e-12


# ---------------------------------------------------------------- perturbed values

def test_zero_perturbation_is_identity(friedrichs):
    T0 = boundary_value(*friedrichs, 0.3)
    T1 = perturbed_boundary_value(T0, Perturbation(np.zeros((1, 1))))
    assert np.array_equal(T1.T, T0.T)


def test_scalar_perturbation_algebra():
    T0 = BoundaryResolvent(0.0, np.array([[1j]]))
    T1 = perturbed_boundary_value(T0, Perturbation(np.array([[1.0]])))
    assert abs(T1.T[0, 0] - (1 + 1j) / 2) <= 1e-15


def test_perturbed_imaginary_part_psd(friedrichs):
    model, rig = friedrichs
    P = rank_one(rig, 0.7)
    for lam in np.linspace(0.03, 0.97, 50):
        T1 = perturbed_boundary_value(boundary_value(model, rig, lam), P)
        assert T1.min_im_eig() >= -1e-10


def test_perturbed_matches_dense_resolvent():
    # independent route: the finite lattice Hamiltonian resolved at lam + i y
    model = build_model("lattice", L=200)
    rig = build_rigging(model, "decay", 3)
    P = site_potential(rig, {0: 0.5, 1: -0.3})
    from lapscatter.model import perturbed_hamiltonian
    H1 = perturbed_hamiltonian(rig, P).toarray()
    z = 0.4 + 0.5j
    F = rig.matrix()
    dense = F @ np.linalg.solve(H1 - z * np.eye(len(H1)), F.conj().T)
    T0 = BoundaryResolvent(z.real, sandwiched_resolvent(model, rig, z))
    assert np.max(np.abs(perturbed_boundary_value(T0, P).T - dense)) <= 1e-10


def test_resonance_error():
    T0 = BoundaryResolvent(0.5, np.array([[-1.0]]))
    with pytest.raises(ResonanceError, match="embedded resonance"):
        perturbed_boundary_value(T0, Perturbation(np.array([[1.0]])))


def test_resonance_condition_sees_small_scalars():
    assert resonance_condition(np.array([[1e-12]])) == pytest.approx(1e12)
    assert resonance_condition(np.eye(3)) == 1.0
    assert resonance_condition(np.zeros((2, 2))) == math.inf
    T0 = BoundaryResolvent(0.5, np.array([[-1.0 + 1e-13j]]))
    with pytest.raises(ResonanceError):
        perturbed_boundary_value(T0, Perturbation(np.array([[1.0]])))


def test_perturbation_size_mismatch(friedrichs):
    with pytest.raises(ConfigError):
        perturbed_boundary_value(boundary_value(*friedrichs, 0.5), Perturbation(np.eye(2)))


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=-3, max_value=3))
def test_rank_one_friedrichs_closed_form(lam, v):
    # T1 = T0 / (1 + v T0) for a scalar rigging
    model = build_model("quadrature", (0.0, 1.0), N=32)
    rig = build_rigging(model, "unit", 1)
    T0 = boundary_value(model, rig, lam)
    t = T0.T[0, 0]
    T1 = perturbed_boundary_value(T0, rank_one(rig, v))
    assert abs(T1.T[0, 0] - t / (1 + v * t)) <= 1e-12 * (1 + abs(t))


# ---------------------------------------------------------------- windows

def test_full_window_equals_boundary_value(friedrichs, lattice):
    for (model, rig), lam, window in ((friedrichs, 0.4, (-1.0, 2.0)), (lattice, 0.3, (-3.0, 3.0))):
        a = windowed_boundary_value(model, rig, window, lam)
        assert np.max(np.abs(a.T - boundary_value(model, rig, lam).T)) <= 1e-8
        assert a.window == window


@pytest.mark.parametrize("which", ["quadrature", "lattice"])
def test_window_imaginary_part_independent(which):
    if which == "quadrature":
        model = build_model("quadrature", (0.0, 1.0), N=64)
        rig = build_rigging(model, "decay", 3)
        w1, w2, lam = (0.3, 0.7), (0.4, 0.6), 0.5
    else:
        model = build_model("lattice", L=40)
        rig = build_rigging(model, "decay", 3)
        w1, w2, lam = (-1.0, 1.0), (-0.5, 0.4), 0.0
    a = windowed_boundary_value(model, rig, w1, lam)
    b = windowed_boundary_value(model, rig, w2, lam)
    assert np.max(np.abs(a.ImT - b.ImT)) <= 1e-8
    # the real parts carry the window-dependent principal-value tail
    assert np.max(np.abs(a.T.real - b.T.real)) > 1e-3


def test_window_real_part_difference_is_tail_integral():
    model = build_model("quadrature", (0.0, 1.0), N=64)
    rig = build_rigging(model, "unit", 1)
    a = windowed_boundary_value(model, rig, (0.3, 0.7), 0.5).T[0, 0]
    b = windowed_boundary_value(model, rig, (0.4, 0.6), 0.5).T[0, 0]
    # int over (0.3, 0.4) and (0.6, 0.7) of 1/(x - 0.5) cancels by symmetry
    assert abs(a - b) <= 1e-12
    c = windowed_boundary_value(model, rig, (0.3, 0.6), 0.5).T[0, 0]
    assert abs((a - c) - math.log(0.2 / 0.1)) <= 1e-10


def test_window_exhaustion(lattice):
    quad = build_model("quadrature", (0.0, 1.0), N=64)
    for (model, rig), lam, windows in (
            ((quad, build_rigging(quad, "decay", 3)), 0.5, [(0.4, 0.6), (0.3, 0.7), (0.2, 0.8), (0.1, 0.9), (0.02, 0.98)]),
            (lattice, 0.2, [(-0.2, 0.6), (-0.6, 1.0), (-1.2, 1.4), (-1.8, 1.9), (-1.99, 1.99)])):
        full = boundary_value(model, rig, lam).T
        errs = [np.linalg.norm(windowed_boundary_value(model, rig, w, lam).T - full, 2) for w in windows]
        assert all(a > b for a, b in zip(errs, errs[1:]))


def test_window_must_contain_lambda(friedrichs):
    with pytest.raises(ConfigError):
        windowed_boundary_value(*friedrichs, (0.6, 0.8), 0.5)
    with pytest.raises(ConfigError):
        windowed_boundary_value(*friedrichs, (0.2, math.inf), 0.5)
    with pytest.raises(EdgeOfSpectrumError):
        windowed_boundary_value(*friedrichs, (0.49, 0.8), 0.5)


# ---------------------------------------------------------------- regular set

def test_free_scan_all_regular(friedrichs):
    grid = np.linspace(0.03, 0.97, 101)
    scan = scan_regular_points(*friedrichs, [], grid)
    assert scan.regular_fraction == 1.0
    assert scan.excluded.size == 0


def test_engineered_resonance_excluded():
    from scipy.optimize import brentq
    model = build_model("quadrature", (0.0, 1.0), N=64)
    rig = build_rigging(model, "decay", 2)
    P = rank_one(rig, RESONANT_STRENGTH, index=1)
    root = brentq(lambda x: 1 + RESONANT_STRENGTH * boundary_value(model, rig, x).T[1, 1].real, 0.4, 0.6, xtol=1e-14)
    assert root == pytest.approx(0.5, abs=1e-10)
    grid = np.linspace(0.05, 0.95, 181)
    scan = scan_regular_points(model, rig, [P], grid)
    assert np.allclose(scan.excluded, [0.5])
    i = int(np.argmin(np.abs(grid - 0.5)))
    assert scan.reasons[i][1] == "resonance"
    assert scan.regular_fraction >= 0.99


def test_lattice_edges_excluded():
    model = build_model("lattice", L=40)
    rig = build_rigging(model, "decay", 3)
    scan = scan_regular_points(model, rig, [], np.linspace(-2.0, 2.0, 41))
    assert set(scan.excluded) == {-2.0, 2.0}
    assert scan.reasons[0] == ["edge"]


def test_scan_is_thread_independent(lattice):
    grid = np.linspace(-1.8, 1.8, 12)
    P = site_potential(lattice[1], {0: 0.5})
    a = scan_regular_points(*lattice, [P], grid)
    b = scan_regular_points(*lattice, [P], grid, threads=4)
    assert np.array_equal(a.regular, b.regular)
    assert np.array_equal(a.residuals, b.residuals)
