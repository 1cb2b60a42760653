"""Exact second-moment (Gaussian) dynamics for the linearized models.

Quadratic Hamiltonians with linear jump operators close on the first and
second moments for any state, so these engines track the mean vector and
the symmetric covariance matrix exactly, independent of Fock truncation.
Quadratures are ordered (x_1, p_1, ..., x_N, p_N) with vacuum variance 1/2
(hbar = 1); that convention is stamped on every emitted header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .model import FrameParams
from .fock import EffectiveTwoMode, FullLinearized, effective_generator

VACUUM_CONVENTION = "quadrature ordering (x1,p1,...); vacuum variance 1/2; hbar=1"


class StabilityError(RuntimeError):
    """The drift matrix is not Hurwitz: no stable steady state."""


class PhysicalityError(RuntimeError):
    """A covariance matrix violated the uncertainty bound."""


def symplectic_form(n_modes: int) -> np.ndarray:
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for m in range(n_modes):
        omega[2 * m, 2 * m + 1] = 1.0
        omega[2 * m + 1, 2 * m] = -1.0
    return omega


@dataclass
class CovarianceState:
    """First moments and symmetric covariance of N modes."""

    mean: np.ndarray
    cov: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, float)
        self.cov = np.asarray(self.cov, float)
        n = self.mean.size
        if self.cov.shape != (n, n) or n % 2:
            raise ValueError("covariance must be (2N, 2N) matching the mean vector")

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def symmetry_defect(self) -> float:
        return float(np.abs(self.cov - self.cov.T).max())

    def physicality_defect(self) -> float:
        """Most negative eigenvalue of cov + i Omega/2 (0 when physical)."""
        omega = symplectic_form(self.n_modes)
        eigs = np.linalg.eigvalsh(self.cov + 0.5j * omega)
        return float(min(eigs.min(), 0.0))

    def validate(self, sym_tol: float = 1e-12, phys_tol: float = 1e-8):
        if self.symmetry_defect() > sym_tol:
            raise ValueError("covariance matrix is not symmetric")
        if self.physicality_defect() < -phys_tol:
            raise PhysicalityError("covariance violates the uncertainty bound")

    def occupation(self, mode: int) -> float:
        """<n> of one mode (0-indexed), including the mean displacement."""
        i = 2 * mode
        var = self.cov[i, i] + self.cov[i + 1, i + 1]
        disp = self.mean[i] ** 2 + self.mean[i + 1] ** 2
        return 0.5 * (var + disp - 1.0)

    def mode_coherence(self, m1: int, m2: int) -> complex:
        """<b_m1^dag b_m2> from the moments."""
        i, j = 2 * m1, 2 * m2
        c = self.cov
        re = c[i, j] + c[i + 1, j + 1] + self.mean[i] * self.mean[j] + self.mean[i + 1] * self.mean[j + 1]
        im = c[i, j + 1] - c[i + 1, j] + self.mean[i] * self.mean[j + 1] - self.mean[i + 1] * self.mean[j]
        return 0.5 * (re + 1j * im)


def vacuum_state(n_modes: int) -> CovarianceState:
    return CovarianceState(np.zeros(2 * n_modes), 0.5 * np.eye(2 * n_modes))


def fock_moments(n_modes: int, occupations: tuple[int, ...]) -> CovarianceState:
    """Second moments of a product Fock state (not Gaussian, still exact)."""
    cov = np.zeros((2 * n_modes, 2 * n_modes))
    for m, n in enumerate(occupations):
        cov[2 * m, 2 * m] = cov[2 * m + 1, 2 * m + 1] = n + 0.5
    return CovarianceState(np.zeros(2 * n_modes), cov)


def squeezed_vacuum(n_modes: int, mode: int, r: float) -> CovarianceState:
    """Vacuum with mode ``mode`` squeezed by r (x variance e^{-2r}/2)."""
    state = vacuum_state(n_modes)
    state.cov[2 * mode, 2 * mode] = 0.5 * math.exp(-2 * r)
    state.cov[2 * mode + 1, 2 * mode + 1] = 0.5 * math.exp(2 * r)
    return state


# -- drift/diffusion construction -------------------------------------------

@dataclass
class DriftDiffusion:
    """Moment dynamics d<r>/dt = A <r>, dS/dt = A S + S A^T + D.

    ``drift`` is the constant part; for time-dependent generators the
    oscillating part is carried as cos/sin basis matrices and evaluated by
    :meth:`drift_at`.
    """

    drift: np.ndarray
    diffusion: np.ndarray
    cos_terms: tuple[tuple[float, np.ndarray], ...] = ()
    sin_terms: tuple[tuple[float, np.ndarray], ...] = ()
    f_max: float = 0.0

    @property
    def time_dependent(self) -> bool:
        return bool(self.cos_terms or self.sin_terms)

    def drift_at(self, t: float, out: np.ndarray | None = None) -> np.ndarray:
        if not self.time_dependent:
            if out is None:
                return self.drift
            np.copyto(out, self.drift)
            return out
        if out is None:
            out = np.empty_like(self.drift)
        np.copyto(out, self.drift)
        for nu, mat in self.cos_terms:
            out += math.cos(nu * t) * mat
        for nu, mat in self.sin_terms:
            out += math.sin(nu * t) * mat
        return out


def _quad_form_number(n_modes, m, n, c):
    """Quadrature matrix of c b_m^dag b_n + conj(c) b_n^dag b_m."""
    H = np.zeros((2 * n_modes, 2 * n_modes))
    re, im = c.real, c.imag
    if m == n:
        # diagonal case c b^dag b (c real): c (x^2 + p^2)/2 up to a constant
        H[2 * m, 2 * m] = H[2 * m + 1, 2 * m + 1] = re
        return H
    for (i, j, v) in (
        (2 * m, 2 * n, re), (2 * m + 1, 2 * n + 1, re),
        (2 * m, 2 * n + 1, -im), (2 * m + 1, 2 * n, im),
    ):
        H[i, j] += v
        H[j, i] += v
    return H


def _quad_form_squeeze(n_modes, m, n, c):
    """Quadrature matrix of c b_m^dag b_n^dag + conj(c) b_m b_n (m != n)."""
    H = np.zeros((2 * n_modes, 2 * n_modes))
    re, im = c.real, c.imag
    for (i, j, v) in (
        (2 * m, 2 * n, re), (2 * m + 1, 2 * n + 1, -re),
        (2 * m, 2 * n + 1, im), (2 * m + 1, 2 * n, im),
    ):
        H[i, j] += v
        H[j, i] += v
    return H


def _jump_vector(n_modes, coeffs, dagger) -> np.ndarray:
    """Complex quadrature vector lambda with L = lambda^T r for a linear jump.

    ``coeffs[m]`` multiplies b_m (or b_m^dag when ``dagger``),
    b = (x + i p)/sqrt(2).
    """
    lam = np.zeros(2 * n_modes, complex)
    for m, c in coeffs.items():
        if dagger:
            lam[2 * m] += c / math.sqrt(2)
            lam[2 * m + 1] += -1j * c / math.sqrt(2)
        else:
            lam[2 * m] += c / math.sqrt(2)
            lam[2 * m + 1] += 1j * c / math.sqrt(2)
    return lam


def _jump_drift_diffusion(omega, lam, rate):
    outer = np.outer(lam, lam.conj())
    A = -rate * omega @ outer.imag
    D = rate * omega @ outer.real @ omega.T
    return A, D


def drift_diffusion_from_generator(spec, t: float | None = None) -> DriftDiffusion:
    """Map a generator spec onto moment dynamics.

    For the time-dependent full model the returned object carries the
    oscillating drift basis; pass ``t`` to also get nothing extra (the time
    argument only matters through :meth:`DriftDiffusion.drift_at`).
    """
    if isinstance(spec, EffectiveTwoMode):
        return _dd_effective(spec)
    if isinstance(spec, FullLinearized):
        return _dd_full(spec)
    raise TypeError(f"unknown generator spec {type(spec).__name__}")


def _dd_effective(spec: EffectiveTwoMode) -> DriftDiffusion:
    n = 2
    omega = symplectic_form(n)
    p = spec.params
    H = np.zeros((2 * n, 2 * n))
    s1, s2 = spec.freq_shifts
    for m, s in ((0, s1), (1, s2)):
        H[2 * m, 2 * m] += s
        H[2 * m + 1, 2 * m + 1] += s
    H += _quad_form_number(n, 0, 1, complex(p.exchange_coupling))
    A = omega @ H
    D = np.zeros((2 * n, 2 * n))
    jump_list = []
    d1, u1 = p.rate_table["1"]
    d2, u2 = p.rate_table["2"]
    dc, uc = p.rate_table["collective"]
    jump_list += [({0: 1.0}, False, d1), ({0: 1.0}, True, u1)]
    jump_list += [({1: 1.0}, False, d2), ({1: 1.0}, True, u2)]
    coll = {0: spec.collective.c_1, 1: spec.collective.c_2}
    jump_list += [(coll, False, dc), (coll, True, uc)]
    if spec.thermal_baths is not None:
        for m, (rate, nth) in enumerate(spec.thermal_baths):
            jump_list += [({m: 1.0}, False, rate * (nth + 1)), ({m: 1.0}, True, rate * nth)]
    rates = []
    for coeffs, dagger, rate in jump_list:
        if rate < 0:
            raise ValueError("negative Lindblad rate")
        if rate == 0:
            continue
        lam = _jump_vector(n, coeffs, dagger)
        dA, dD = _jump_drift_diffusion(omega, lam, rate)
        A = A + dA
        D = D + dD
        rates.append(rate)
    f_max = max([abs(p.exchange_coupling), abs(s1), abs(s2)] + rates + [0.0])
    return DriftDiffusion(drift=A, diffusion=D, f_max=f_max)


def _dd_full(spec: FullLinearized) -> DriftDiffusion:
    # subsystem order (cavity, mode 1, mode 2)
    fr = spec.frame
    n = 3
    omega = symplectic_form(n)

    by_freq: dict[tuple[int, int, int], list] = {}
    delta_sym = {1: (1, 0, 1), 2: (1, 0, -1)}
    omega_sym = {1: (0, 1, 1), 2: (0, 1, -1)}
    for j, G in ((1, fr.G_1), (2, fr.G_2)):
        for k in (1, 2):
            dk, wj = delta_sym[k], omega_sym[j]
            plus = (dk[0] + wj[0], dk[1] + wj[1], dk[2] + wj[2])
            minus = (dk[0] - wj[0], dk[1] - wj[1], dk[2] - wj[2])
            by_freq.setdefault(plus, []).append(("squeeze", j, G))
            by_freq.setdefault(minus, []).append(("beamsplit", j, G))

    cos_terms, sin_terms = [], []
    f_max = 0.0
    for key in sorted(by_freq):
        nu = key[0] * fr.delta_bar + key[1] * fr.omega_bar + key[2] * (fr.delta_omega / 2)
        f_max = max(f_max, abs(nu))
        Hc = np.zeros((2 * n, 2 * n))
        Hs = np.zeros((2 * n, 2 * n))
        for kind, j, G in by_freq[key]:
            # coefficient G e^{i nu t} on a^dag b_j^dag (squeeze) or a^dag b_j
            if kind == "squeeze":
                Hc += _quad_form_squeeze(n, 0, j, G + 0j)
                Hs += _quad_form_squeeze(n, 0, j, 1j * G)
            else:
                Hc += _quad_form_number(n, 0, j, G + 0j)
                Hs += _quad_form_number(n, 0, j, 1j * G)
        cos_terms.append((nu, omega @ Hc))
        sin_terms.append((nu, omega @ Hs))

    A0 = np.zeros((2 * n, 2 * n))
    D = np.zeros((2 * n, 2 * n))
    jump_list = [({0: 1.0}, False, fr.kappa)]
    if fr.thermal_baths is not None:
        for m, (rate, nth) in enumerate(fr.thermal_baths, start=1):
            jump_list += [({m: 1.0}, False, rate * (nth + 1)), ({m: 1.0}, True, rate * nth)]
    for coeffs, dagger, rate in jump_list:
        if rate == 0:
            continue
        lam = _jump_vector(n, coeffs, dagger)
        dA, dD = _jump_drift_diffusion(omega, lam, rate)
        A0 = A0 + dA
        D = D + dD
        f_max = max(f_max, rate)
    return DriftDiffusion(
        drift=A0,
        diffusion=D,
        cos_terms=tuple(cos_terms),
        sin_terms=tuple(sin_terms),
        f_max=f_max,
    )


# -- propagation and steady state -------------------------------------------

@dataclass
class GaussTrajectory:
    """Recorded moments of one covariance integration."""

    t: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    log_negativity: np.ndarray
    min_symp_eig: np.ndarray
    physicality: np.ndarray
    final_state: CovarianceState
    occupations: np.ndarray

    @property
    def max_physicality_defect(self) -> float:
        return float(-self.physicality.min())


def evolve_covariance(
    dd: DriftDiffusion,
    state0: CovarianceState,
    t_end: float,
    dt: float,
    stride: int = 100,
    track_entanglement: bool = False,
    entangled_pair: tuple[int, int] = (0, 1),
    physicality_tol: float = 1e-6,
) -> GaussTrajectory:
    """Fixed-step RK4 on the moment equations.

    The covariance is re-symmetrized every step (pure roundoff control)
    and the uncertainty-bound defect is monitored at every record; a
    defect beyond ``physicality_tol`` aborts.
    """
    if dd.f_max > 0 and dt > 0.01 / dd.f_max * (1 + 1e-9):
        raise ValueError(
            f"dt={dt} too coarse for the fastest scale {dd.f_max}; need dt <= {0.01 / dd.f_max}"
        )
    mean = state0.mean.copy()
    cov = 0.5 * (state0.cov + state0.cov.T)
    n_modes = state0.n_modes
    D = dd.diffusion
    n_steps = int(round(t_end / dt)) if t_end > 0 else 0

    rec_t, rec_n, rec_en, rec_nu, rec_phys = [], [], [], [], []

    def record(t, mean, cov):
        state = CovarianceState(mean, cov, time=t)
        rec_t.append(t)
        rec_n.append([state.occupation(m) for m in range(n_modes)])
        defect = state.physicality_defect()
        rec_phys.append(defect)
        if track_entanglement:
            en, nu = log_negativity(state, entangled_pair, _lenient=True)
            rec_en.append(en)
            rec_nu.append(nu)
        else:
            rec_en.append(math.nan)
            rec_nu.append(math.nan)
        if defect < -physicality_tol:
            raise PhysicalityError(
                f"covariance defect {defect:.3e} at t={t:.6g} beyond {physicality_tol}"
            )

    record(0.0, mean, cov)
    A_buf = np.empty_like(cov) if dd.time_dependent else dd.drift
    half = dt / 2

    def rhs(A, mean, cov):
        dmean = A @ mean
        M = A @ cov
        dcov = M + M.T + D
        return dmean, dcov

    t = 0.0
    for step in range(1, n_steps + 1):
        A1 = dd.drift_at(t) if dd.time_dependent else A_buf
        km1, kc1 = rhs(A1, mean, cov)
        Ah = dd.drift_at(t + half) if dd.time_dependent else A_buf
        km2, kc2 = rhs(Ah, mean + half * km1, cov + half * kc1)
        km3, kc3 = rhs(Ah, mean + half * km2, cov + half * kc2)
        A2 = dd.drift_at(t + dt) if dd.time_dependent else A_buf
        km4, kc4 = rhs(A2, mean + dt * km3, cov + dt * kc3)
        mean += dt / 6 * (km1 + 2 * (km2 + km3) + km4)
        cov += dt / 6 * (kc1 + 2 * (kc2 + kc3) + kc4)
        cov = 0.5 * (cov + cov.T)
        t = step * dt
        if step % stride == 0 or step == n_steps:
            record(t, mean, cov)

    occ = np.array(rec_n)
    return GaussTrajectory(
        t=np.array(rec_t),
        n1=occ[:, 0] if n_modes < 3 else occ[:, 1],
        n2=occ[:, 1] if n_modes < 3 else occ[:, 2],
        log_negativity=np.array(rec_en),
        min_symp_eig=np.array(rec_nu),
        physicality=np.array(rec_phys),
        final_state=CovarianceState(mean, cov, time=t),
        occupations=occ,
    )


def steady_state(dd: DriftDiffusion) -> CovarianceState:
    """Stationary covariance from the continuous Lyapunov equation."""
    if dd.time_dependent:
        raise ValueError("steady state requires a time-independent drift")
    A, D = dd.drift, dd.diffusion
    eigs = np.linalg.eigvals(A)
    if eigs.real.max() >= 0:
        raise StabilityError(
            f"no stable steady state: drift eigenvalue with Re = {eigs.real.max():.3e}"
        )
    sigma = solve_continuous_lyapunov(A, -D)
    sigma = 0.5 * (sigma + sigma.T)
    residual = np.abs(A @ sigma + sigma @ A.T + D).max()
    scale = max(np.abs(D).max(), 1e-300)
    if residual > 1e-10 * scale:
        raise RuntimeError(f"Lyapunov residual {residual:.3e} exceeds 1e-10 * |D|")
    return CovarianceState(np.zeros(A.shape[0]), sigma)


# -- entanglement ------------------------------------------------------------

def log_negativity(
    state: CovarianceState,
    partition: tuple[int, int] = (0, 1),
    _lenient: bool = False,
):
    """Logarithmic negativity of a two-mode state across ``partition``.

    Returns ``(E_N, min_symplectic_eig_of_partial_transpose)``; E_N is
    max(0, -ln 2 nu-).  Only the two-mode case is implemented.
    """
    if state.n_modes != 2 or set(partition) != {0, 1}:
        raise ValueError("log negativity implemented for a 1|1 split of two modes")
    if not _lenient:
        state.validate(sym_tol=1e-10, phys_tol=1e-8)
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    sigma_pt = flip @ state.cov @ flip
    omega = symplectic_form(2)
    eigs = np.linalg.eigvals(omega @ sigma_pt)
    nu_min = float(np.sort(np.abs(eigs))[0])
    en = max(0.0, -math.log(2 * nu_min))
    return en, nu_min


def steady_state_record(state: CovarianceState) -> dict:
    """JSON-ready steady-state record: covariance entries in row-major order."""
    n = state.mean.size
    return {
        "convention": VACUUM_CONVENTION,
        "n_modes": state.n_modes,
        "mean": [float(x) for x in state.mean],
        "covariance_row_major": [float(x) for x in state.cov.reshape(n * n)],
    }


@dataclass
class EntanglementResult:
    max_log_negativity: float
    xi: float
    trajectory: GaussTrajectory


def entanglement_experiment(
    frame: FrameParams,
    r: float,
    t_end: float,
    dt: float | None = None,
    stride: int = 1,
) -> EntanglementResult:
    """Evolve mode-1 squeezed vacuum under the effective model, track E_N.

    Reports the peak logarithmic negativity together with the coupling-
    to-noise ratio of the configuration; the two are reported side by
    side without asserting any particular boundary between them.
    """
    from .effective import classicality_ratio

    spec = effective_generator(frame)
    dd = drift_diffusion_from_generator(spec)
    state0 = squeezed_vacuum(2, 0, r)
    if dt is None:
        dt = 0.01 / dd.f_max if dd.f_max > 0 else t_end / 1000
    traj = evolve_covariance(dd, state0, t_end, dt, stride=stride, track_entanglement=True)
    return EntanglementResult(
        max_log_negativity=float(np.nanmax(traj.log_negativity)),
        xi=classicality_ratio(frame),
        trajectory=traj,
    )
