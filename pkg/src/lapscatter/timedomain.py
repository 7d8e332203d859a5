"""Time-dependent oracle on a large truncated lattice.

The unitary group is applied with a Chebyshev expansion,
``exp(-itH) = exp(-itc) sum_k (2 - delta_k0) (-i)^k J_k(r t) T_k((H - c)/r)``,
where ``[c - r, c + r]`` encloses the spectrum (Gershgorin).  The expansion
is truncated once the bound ``|J_k(a)| <= (|a|/2)^k / k!`` makes the tail
negligible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import gammaln, jv

from ._util import pmap
from .errors import ConfigError, NotConvergedError, PropagationError
from .model import lattice_laplacian, lattice_window_angles

PROPAGATOR_TOL = 1e-8
TAIL_TOL = 1e-2
MASS_TOL = 1e-3
MAX_TERMS = 200_000


@dataclass(frozen=True)
class PropagationConfig:
    """Lattice size, horizon, propagator tolerance and packet parameters.

    ``theta0`` is the packet momentum; its group velocity is -2 sin(theta0),
    so negative momenta move right.
    """

    L_big: int = 2000
    t_max: float = 400.0
    tol: float = PROPAGATOR_TOL
    center: float = -150.0
    theta0: float = -math.pi / 2
    sigma: float = 20.0

    def __post_init__(self):
        if int(self.L_big) < 10:
            raise ConfigError("L_big must be at least 10")
        if not self.sigma > 0:
            raise ConfigError("packet width must be positive")
        if not 0.0 < self.theta0 < math.pi and not -math.pi < self.theta0 < 0.0:
            raise ConfigError("theta0 must lie in (-pi, 0) or (0, pi)")
        if not (self.tol > 0 and self.t_max >= 0):
            raise ConfigError("tolerance must be positive and t_max nonnegative")

    @property
    def lam(self) -> float:
        return 2.0 * math.cos(self.theta0)

    def check_support(self, t: float | None = None, center=None, sigma=None):
        """Raise if any part of the packet, moving at speed 2|sin theta0|,
        comes within 10 sigma of the truncation boundary by time t."""
        t = self.t_max if t is None else t
        c = self.center if center is None else center
        s = self.sigma if sigma is None else sigma
        reach = abs(c) + 2.0 * abs(math.sin(self.theta0)) * abs(t) + 10.0 * s
        if reach > self.L_big:
            raise PropagationError(
                f"packet reaches {reach:.0f} > L_big={self.L_big}; enlarge the lattice or shorten the horizon")


def sites(L: int) -> np.ndarray:
    return np.arange(-L, L + 1)


def wave_packet(L: int, center: float, theta0: float, sigma: float) -> np.ndarray:
    """Normalized Gaussian packet exp(-(n - c)^2 / (4 sigma^2) + i theta0 n).

    The group velocity is -2 sin(theta0).
    """
    n = sites(L)
    f = np.exp(-((n - center) ** 2) / (4.0 * sigma**2) + 1j * theta0 * n)
    return f / np.linalg.norm(f)


def lattice_hamiltonian(L: int, potential=None):
    """Sparse lattice Laplacian with an optional site potential (dict or scalar at 0)."""
    if potential is None:
        potential = {}
    elif not isinstance(potential, dict):
        potential = {0: float(potential)}
    return lattice_laplacian(L, potential)


def fourier(f: np.ndarray, k, L: int | None = None) -> np.ndarray:
    """f^(k) = sum_n f(n) exp(-i k n) over sites -L..L."""
    L = (len(f) - 1) // 2 if L is None else L
    n = sites(L)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return np.exp(-1j * np.outer(k, n)) @ f


def spectral_bounds(H) -> tuple[float, float]:
    """Gershgorin enclosure of the spectrum of a Hermitian (sparse) matrix."""
    H = sparse.csr_matrix(H)
    d = H.diagonal().real
    off = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off)), float(np.max(d + off))


def _terms_needed(a: float, target: float) -> tuple[int, float]:
    """Smallest K with 2 sum_{k>K} (|a|/2)^k/k! <= target, and that bound."""
    a = abs(a)
    if a == 0.0:
        return 0, 0.0
    K = max(1, int(math.ceil(a)))
    while K < MAX_TERMS:
        k = K + 1
        if k + 1 > a / 2:
            log_term = k * math.log(a / 2) - gammaln(k + 1)
            ratio = a / (2 * (k + 1))
            bound = 2.0 * math.exp(log_term) / (1.0 - ratio)
            if bound <= target:
                return K, bound
        K = int(K * 1.05) + 8
    return K, math.inf


@dataclass(frozen=True, eq=False)
class PropagationResult:
    state: np.ndarray
    t: float
    terms: int
    error_bound: float
    norm_defect: float


def propagate(state, H, t: float, tol: float = PROPAGATOR_TOL) -> PropagationResult:
    """exp(-itH) state with a certified truncation bound (t may be negative)."""
    psi = np.asarray(state, dtype=complex)
    if t == 0:
        return PropagationResult(psi.copy(), 0.0, 0, 0.0, 0.0)
    H = sparse.csr_matrix(H)
    lo, hi = spectral_bounds(H)
    c = 0.5 * (hi + lo)
    r = 0.5 * (hi - lo) * (1.0 + 1e-12) + 1e-12
    a = r * t
    K, tail = _terms_needed(a, 1e-3 * tol)
    bound = tail + 8 * (K + 1) * np.finfo(float).eps
    if bound > tol:
        raise PropagationError(f"propagator error bound {bound:.2e} exceeds {tol:.0e}")
    coef = jv(np.arange(K + 1), a) * (-1j) ** np.arange(K + 1)
    coef[1:] *= 2.0
    Hs = (H - c * sparse.identity(H.shape[0], format="csr")) / r
    v_prev = psi
    v = Hs @ psi
    out = coef[0] * v_prev + coef[1] * v
    for k in range(2, K + 1):
        v_prev, v = v, 2.0 * (Hs @ v) - v_prev
        out = out + coef[k] * v
    out = out * np.exp(-1j * t * c)
    nd = abs(float(np.linalg.norm(out)) - float(np.linalg.norm(psi)))
    return PropagationResult(out, float(t), K, float(bound), nd)


def evolve_series(state, H, times, tol: float = PROPAGATOR_TOL):
    """States at increasing times, stepping from one time to the next."""
    out = []
    psi = np.asarray(state, dtype=complex)
    t_prev = 0.0
    for t in times:
        psi = propagate(psi, H, float(t) - t_prev, tol).state
        t_prev = float(t)
        out.append(psi)
    return out


def mean_position(psi: np.ndarray) -> float:
    n = sites((len(psi) - 1) // 2)
    p = np.abs(psi) ** 2
    return float(np.sum(n * p) / np.sum(p))


@dataclass(frozen=True, eq=False)
class TimeWaveResult:
    vector: np.ndarray
    t: float
    tail: float


def time_wave_operator(f, H0, H1, t_max: float, sign: int, tol: float = TAIL_TOL,
                       prop_tol: float = PROPAGATOR_TOL) -> TimeWaveResult:
    """exp(itH1) exp(-itH0) f at t = sign * t_max, with Cauchy tail
    ||result(t_max) - result(t_max / 2)||."""
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")

    def at(t):
        inner = propagate(f, H0, t, prop_tol).state
        return propagate(inner, H1, -t, prop_tol).state

    full = at(sign * t_max)
    half = at(sign * t_max / 2)
    tail = float(np.linalg.norm(full - half))
    if tail > tol:
        raise NotConvergedError(f"not converged: Cauchy tail {tail:.2e} > {tol:.0e}")
    return TimeWaveResult(full, float(sign * t_max), tail)


@dataclass(frozen=True, eq=False)
class FlightResult:
    lam: float
    transmission: float
    reflection: float
    transmitted_mass: float
    reflected_mass: float
    mass_defect: float
    series: np.ndarray = field(repr=False)


def transmission_by_flight(potential, lam: float, config: PropagationConfig | None = None,
                           n_series: int = 8, mass_tol: float = MASS_TOL) -> FlightResult:
    """Send a right-moving packet at energy lam through a compact potential.

    The packet starts at ``config.center`` (left of the potential) and flies
    until its center would sit at ``-config.center``.  Transmission and
    reflection are the momentum-resolved ratios
    ``|psi_T^(-t)|^2 / |f^(-t)|^2`` and ``|psi_R^(t)|^2 / |f^(-t)|^2`` at
    lam = 2 cos t (momentum -t moves right), where psi_T and psi_R are the parts right and left of the
    origin.  ``series`` holds rows (t, transmitted_mass, reflected_mass,
    norm_defect).
    """
    if not -2.0 < lam < 2.0:
        raise ConfigError("lam must lie in (-2, 2)")
    cfg = config or PropagationConfig()
    theta = math.acos(lam / 2.0)
    if cfg.center >= 0:
        raise ConfigError("the packet must start left of the potential")
    t_end = 2.0 * abs(cfg.center) / (2.0 * math.sin(theta))
    cfg.check_support(t_end, cfg.center, cfg.sigma)
    L = int(cfg.L_big)
    H = lattice_hamiltonian(L, potential)
    f = wave_packet(L, cfg.center, -theta, cfg.sigma)
    n = sites(L)
    times = np.linspace(t_end / n_series, t_end, n_series)
    states = evolve_series(f, H, times, cfg.tol)
    rows = []
    for t, psi in zip(times, states):
        tm = float(np.sum(np.abs(psi[n > 0]) ** 2))
        rm = float(np.sum(np.abs(psi[n < 0]) ** 2))
        rows.append((t, tm, rm, abs(float(np.linalg.norm(psi)) - 1.0)))
    psi = states[-1]
    tm, rm = rows[-1][1], rows[-1][2]
    defect = abs(1.0 - tm - rm)
    if defect > mass_tol:
        raise PropagationError(f"mass accounting defect {defect:.2e} exceeds {mass_tol:.0e}")
    f0 = abs(fourier(f, -theta)[0]) ** 2
    right = np.where(n > 0, psi, 0.0)
    left = np.where(n < 0, psi, 0.0)
    tau2 = float(abs(fourier(right, -theta)[0]) ** 2 / f0)
    rho2 = float(abs(fourier(left, theta)[0]) ** 2 / f0)
    return FlightResult(float(lam), tau2, rho2, tm, rm, defect, np.array(rows))


def flight_scan(potential, lams, config: PropagationConfig | None = None, threads: int = 1) -> list:
    return pmap(lambda lam: transmission_by_flight(potential, float(lam), config), lams, threads)


def light_cone_leakage(t: float, L: int | None = None, margin: float = 20.0, potential=None,
                       tol: float = PROPAGATOR_TOL) -> float:
    """Mass of exp(-itH) delta_0 at sites |n| > 2|t| + margin."""
    L = int(L or math.ceil(2 * abs(t) + 4 * margin + 20))
    H = lattice_hamiltonian(L, potential)
    d = np.zeros(2 * L + 1, dtype=complex)
    d[L] = 1.0
    psi = propagate(d, H, t, tol).state
    n = sites(L)
    return float(np.sum(np.abs(psi[np.abs(n) > 2 * abs(t) + margin]) ** 2))


@dataclass(frozen=True, eq=False)
class EnergyWindowCheck:
    integral: float
    bound: float
    evaluation_sup: float
    hs_norm_sq: float

    @property
    def ratio(self) -> float:
        return self.integral / self.bound


def energy_window_check(g, weights: dict, interval, horizon: float, dt: float = 0.5,
                        n_theta: int = 2000, tol: float = PROPAGATOR_TOL) -> EnergyWindowCheck:
    """Compare int_{-T}^{T} ||F exp(-itH0) g||^2 dt with 2 pi N^2 ||F E_w||_HS^2.

    ``weights`` maps rigged sites to kappa; ``g`` lives on sites -L..L and
    should be spectrally concentrated in the window.  N is the supremum over
    the window of ``||E_lam g||^2 = (|g^(t)|^2 + |g^(-t)|^2) / (4 pi sin t)``
    and ``||F E_w||_HS^2 = sum kappa^2 (t2 - t1) / pi``.
    """
    g = np.asarray(g, dtype=complex)
    L = (len(g) - 1) // 2
    H = lattice_hamiltonian(L)
    idx = np.array([int(s) + L for s in weights])
    kap = np.array([float(k) for k in weights.values()])
    t1, t2 = lattice_window_angles(interval)
    th = np.linspace(t1, t2, n_theta + 2)[1:-1]
    ev2 = (np.abs(fourier(g, th, L)) ** 2 + np.abs(fourier(g, -th, L)) ** 2) / (4 * math.pi * np.sin(th))
    N2 = float(ev2.max())
    hs2 = float(np.sum(kap**2) * (t2 - t1) / math.pi)
    steps = int(math.ceil(horizon / dt))
    h = horizon / steps

    def observe(psi):
        return float(np.sum((kap * np.abs(psi[idx])) ** 2))

    total = 0.0
    for direction in (1.0, -1.0):
        psi = g
        vals = [observe(psi)]
        for _ in range(steps):
            psi = propagate(psi, H, direction * h, tol).state
            vals.append(observe(psi))
        vals = np.array(vals)
        total += h * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
    bound = 2 * math.pi * N2 * hs2
    return EnergyWindowCheck(total, bound, math.sqrt(N2), hs2)
