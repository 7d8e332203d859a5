import numpy as np
import pytest

from lapscatter.errors import ConfigError, GluingError
from lapscatter.fiber import fiber_at
from lapscatter.lap import boundary_value
from lapscatter.model import H, H1, ScaleVector, build_model, build_rigging
from lapscatter.sheaf import (
    beta_coordinates, evaluate_section, gluing_unitary, lattice_grid, psi_matrix, quadrature_grid,
    schmidt_window, section_norm, window_fiber, windowed_evaluation, zero_section,
)

WINDOWS = [(0.2, 0.6), (0.4, 0.8), (0.3, 0.7)]


@pytest.fixture(scope="module")
def setup():
    model = build_model("quadrature", (0.0, 1.0), N=64)
    return model, build_rigging(model, "decay", 4)


@pytest.fixture(scope="module")
def windows(setup):
    return {w: schmidt_window(*setup, w) for w in WINDOWS}


def test_schmidt_invariants(setup):
    model, rig = setup
    for w in [(0.1, 0.5), (0.3, 0.9), (-1.0, 2.0)]:
        wd = schmidt_window(model, rig, w)
        assert np.all(np.diff(wd.kappa) <= 0) and np.all(wd.kappa > 0)
        d = wd.rank
        assert np.max(np.abs(wd.right.conj().T @ wd.right - np.eye(d))) <= 1e-10
        assert np.max(np.abs(wd.left.conj().T @ wd.left - np.eye(d))) <= 1e-10
        assert abs(np.sum(wd.kappa**2) - wd.hs_norm**2) <= 1e-10


def test_schmidt_values_with_full_coordinate_family():
    # m = N: the weighted Legendre family is an orthogonal change of
    # coordinates, so the Schmidt values are the weights at the nodes in the window
    model = build_model("quadrature", (0.0, 1.0), N=32)
    rig = build_rigging(model, "decay", 32)
    wd = schmidt_window(model, rig, (0.2, 0.7))
    x = model.nodes[(model.nodes > 0.2) & (model.nodes < 0.7)]
    assert wd.rank == len(x)
    assert np.max(np.abs(wd.kappa - np.sort(1.0 / (1.0 + x))[::-1])) <= 1e-12


def test_schmidt_disjoint_window(setup):
    wd = schmidt_window(*setup, (2.0, 3.0))
    assert wd.rank == 0 and wd.hs_norm == 0.0


def test_schmidt_is_deterministic(setup):
    a, b = schmidt_window(*setup, (0.1, 0.5)), schmidt_window(*setup, (0.1, 0.5))
    assert np.array_equal(a.right, b.right) and np.array_equal(a.left, b.left)
    idx = np.argmax(np.abs(a.right), axis=0)
    piv = a.right[idx, np.arange(a.rank)]
    assert np.allclose(piv.imag, 0.0) and np.all(piv.real > 0)


def test_beta_of_schmidt_vector(setup, windows):
    wd = windows[(0.2, 0.6)]
    f = ScaleVector(wd.kappa[0] * wd.right[:, 0], H)
    beta = beta_coordinates(f, wd)
    assert beta.window == (0.2, 0.6)
    e1 = np.zeros(wd.rank)
    e1[0] = 1.0
    assert np.max(np.abs(beta.coords - e1)) <= 1e-10


def test_beta_from_h1_and_model_agree(setup, windows):
    model, rig = setup
    g = np.array([1.0, -0.5j, 0.25, 2.0])
    f_model = rig.matrix().conj().T @ g
    for wd in windows.values():
        a = beta_coordinates(ScaleVector(g, H1), wd).coords
        b = beta_coordinates(ScaleVector(f_model, H), wd).coords
        assert np.max(np.abs(a - b)) <= 1e-10


def test_beta_rejects_window_vectors(windows):
    wd = windows[(0.2, 0.6)]
    with pytest.raises(ConfigError):
        beta_coordinates(ScaleVector(np.ones(4), H1, (0.2, 0.6)), wd)
    with pytest.raises(ConfigError):
        beta_coordinates(ScaleVector(np.ones(3), H1), wd)


def test_restriction_law(setup):
    model, rig = setup
    w1, w2 = schmidt_window(model, rig, (0.3, 0.6)), schmidt_window(model, rig, (0.1, 0.8))
    rng = np.random.default_rng(1)
    for _ in range(10):
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        f = rig.matrix().conj().T @ g
        restricted = beta_coordinates(ScaleVector(w1.projection @ f, H), w1).coords
        via_psi = psi_matrix(w1, w2) @ beta_coordinates(ScaleVector(w2.projection @ f, H), w2).coords
        assert np.max(np.abs(restricted - via_psi)) <= 1e-10


def test_window_restriction_is_contraction(setup, windows):
    rng = np.random.default_rng(2)
    for _ in range(100):
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        for wd in windows.values():
            assert np.linalg.norm(beta_coordinates(ScaleVector(g, H1), wd).coords) <= np.linalg.norm(g) * (1 + 1e-12)


def test_psi_identity_and_composition(setup):
    model, rig = setup
    w1, w2, w3 = (schmidt_window(model, rig, w) for w in [(0.4, 0.6), (0.3, 0.7), (0.1, 0.95)])
    assert np.max(np.abs(psi_matrix(w2, w2) - np.eye(w2.rank))) <= 1e-12
    assert np.max(np.abs(psi_matrix(w1, w3) - psi_matrix(w1, w2) @ psi_matrix(w2, w3))) <= 1e-9


def test_psi_is_contraction(setup):
    model, rig = setup
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = np.sort(rng.uniform(0, 1, 2)), np.sort(rng.uniform(0, 1, 2))
        w1 = schmidt_window(model, rig, (a[0], a[1] + 1e-3))
        w2 = schmidt_window(model, rig, (b[0], b[1] + 1e-3))
        if w1.rank and w2.rank:
            assert np.linalg.norm(psi_matrix(w1, w2), 2) <= 1 + 1e-10


def test_psi_needs_same_rigging(setup):
    model, rig = setup
    other = build_rigging(model, "decay", 3)
    with pytest.raises(ConfigError):
        psi_matrix(schmidt_window(model, rig, (0.2, 0.6)), schmidt_window(model, other, (0.2, 0.6)))


def _evals(setup, windows, lam):
    return {w: windowed_evaluation(*setup, wd, lam)[1] for w, wd in windows.items()}


def test_gluing_identity(setup, windows):
    wd = windows[(0.2, 0.6)]
    _, ev = windowed_evaluation(*setup, wd, 0.5)
    U = gluing_unitary(0.5, wd, wd, ev, ev)
    assert np.max(np.abs(U.U - np.eye(ev.rank))) <= 1e-12


def test_gluing_cocycle_and_unitarity(setup, windows):
    ev = _evals(setup, windows, 0.5)
    a, b, c = WINDOWS
    U_ba = gluing_unitary(0.5, windows[a], windows[b], ev[a], ev[b])
    U_cb = gluing_unitary(0.5, windows[b], windows[c], ev[b], ev[c])
    U_ca = gluing_unitary(0.5, windows[a], windows[c], ev[a], ev[c])
    for U in (U_ba, U_cb, U_ca):
        assert U.unitarity_defect <= 1e-8
        assert np.max(np.abs(U.U.conj().T @ U.U - np.eye(U.U.shape[0]))) <= 1e-8
        assert U.residual <= 1e-8
    assert np.max(np.abs(U_ca.U - U_cb.U @ U_ba.U)) <= 1e-7


def test_evaluation_norm_independent_of_window(setup, windows):
    ev = _evals(setup, windows, 0.5)
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        h = rng.normal(size=4) + 1j * rng.normal(size=4)
        vals = [(ev[w].matrix @ (windows[w].left.conj().T @ g), ev[w].matrix @ (windows[w].left.conj().T @ h))
                for w in WINDOWS]
        norms = [np.linalg.norm(a) for a, _ in vals]
        assert max(norms) - min(norms) <= 1e-8
        prods = [np.vdot(a, b) for a, b in vals]
        assert max(abs(p - prods[0]) for p in prods) <= 1e-9


def test_gluing_compatibility_on_grid(setup, windows):
    a, b = (0.2, 0.6), (0.4, 0.8)
    g = np.array([0.3, 1.0, -0.7j, 0.2])
    for lam in np.linspace(0.42, 0.58, 5):
        ev = {w: windowed_evaluation(*setup, windows[w], lam)[1] for w in (a, b)}
        U = gluing_unitary(lam, windows[a], windows[b], ev[a], ev[b])
        va = ev[a].matrix @ (windows[a].left.conj().T @ g)
        vb = ev[b].matrix @ (windows[b].left.conj().T @ g)
        assert np.max(np.abs(U.U @ va - vb)) <= 1e-8


def test_gluing_rank_mismatch(setup, windows):
    wd = windows[(0.2, 0.6)]
    _, ev = windowed_evaluation(*setup, wd, 0.5)
    lattice = build_model("lattice", L=30)
    lrig = build_rigging(lattice, "decay", 4)
    _, ev2 = fiber_at(boundary_value(lattice, lrig, 0.5))
    with pytest.raises(GluingError, match="ranks differ"):
        gluing_unitary(0.5, wd, wd, ev, ev2)


def test_window_fiber_full_window_matches_plain_fiber(setup):
    model, rig = setup
    wd = schmidt_window(model, rig, (-1.0, 2.0))
    T = boundary_value(model, rig, 0.35)
    fib_w, ev_w = window_fiber(wd, T)
    fib, ev = fiber_at(T)
    g = np.array([1.0, 2.0, -1.0, 0.5j])
    assert fib_w.rank == fib.rank == 1
    assert abs(np.linalg.norm(ev_w.matrix @ (wd.left.conj().T @ g)) - np.linalg.norm(ev(g))) <= 1e-10


def test_restriction_surjective(setup):
    model, rig = setup
    w1, w2 = schmidt_window(model, rig, (0.3, 0.6)), schmidt_window(model, rig, (0.1, 0.8))
    P = psi_matrix(w1, w2)
    for j in range(w1.rank):
        e = np.zeros(w1.rank)
        e[j] = 1.0
        x, *_ = np.linalg.lstsq(P, e, rcond=None)
        assert np.linalg.norm(P @ x - e) <= 1e-8


def test_exhaustion(setup):
    model, rig = setup
    rng = np.random.default_rng(5)
    chain = [(0.45, 0.55), (0.35, 0.65), (0.2, 0.8), (0.05, 0.95), (-0.1, 1.1)]
    wds = [schmidt_window(model, rig, w) for w in chain]
    for _ in range(10):
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        norms = [np.linalg.norm(beta_coordinates(ScaleVector(g, H1), wd).coords) for wd in wds]
        assert all(a <= b + 1e-10 for a, b in zip(norms, norms[1:]))
        assert abs(norms[-1] - np.linalg.norm(g)) <= 1e-6


def test_section_norm_quadrature(setup):
    model, rig = setup
    grid, weights = quadrature_grid(model)
    chain = [(0.3, 0.7), (0.1, 0.9), (-0.5, 1.5)]
    rng = np.random.default_rng(6)
    for _ in range(3):
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        sec = evaluate_section(model, rig, g, chain, grid, weights)
        total, norms = section_norm(sec, chain)
        assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:]))
        f_norm = np.linalg.norm(rig.matrix().conj().T @ g)
        assert abs(total - f_norm) <= 1e-3 * f_norm


def test_section_norm_lattice():
    model = build_model("lattice", L=30)
    rig = build_rigging(model, "decay", 5)
    grid, weights = lattice_grid(60)
    g = np.array([0.5, -1.0, 2.0, 0.3j, 1.0])
    sec = evaluate_section(model, rig, g, [(-3.0, 3.0)], grid, weights)
    total, _ = section_norm(sec)
    f_norm = np.linalg.norm(rig.matrix().conj().T @ g)
    assert abs(total - f_norm) <= 1e-3 * f_norm


def test_zero_section():
    grid, w = lattice_grid(10)
    total, norms = section_norm(zero_section(grid, w, [(-1.0, 1.0), (-2.0, 2.0)]))
    assert total == 0.0 and norms == [0.0, 0.0]


def test_quadrature_grid_needs_quadrature_model():
    with pytest.raises(ConfigError):
        quadrature_grid(build_model("lattice", L=10))


def test_lattice_grid_integrates_band():
    lam, w = lattice_grid(40, -1.0, 1.5)
    assert np.all(np.diff(lam) > 0)
    assert abs(w.sum() - 2.5) <= 1e-12
    assert abs(np.sum(w * lam**2) - (1.5**3 + 1) / 3) <= 1e-12
