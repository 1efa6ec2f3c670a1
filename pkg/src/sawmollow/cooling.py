"""Phonon cooling rates of the driven emitter-optomechanical system.

Two analytic routes give the semiclassical cooling rate: a closed form

    R = (delta / Omega_R) * rabi_L^2 rabi_S^2 /
        ((omega_S - Omega_R)^2 Omega_R^2 + rabi_L^2 rabi_S^2) * gamma * rho_ee

and the equivalent sum of phonon-number changes weighted by dipole
strengths over the 12 doubly dressed transitions.  Negative rates remove
phonons (cooling, red-detuned laser); the optimum sits on the Rabi
resonance contour Omega_R = omega_S.

The quantized route solves d rho/dt = 0 for the Lindblad master equation
of the two-level system coupled to a damped thermal phonon mode (jump
operators: spontaneous emission, thermal pumping gamma_S*m_th b+, and
damping gamma_S*(m_th+1) b) and reports the normalized cooling
performance C = (m_ss - m_th)/m_th.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .dressed import transition_table
from .model import (
    AcousticCavity,
    DomainError,
    DriveConfig,
    EmitterParams,
    Frequency,
    Spectrum,
    _as_rad,
    thermal_occupation,
)
from .bloch import BlochGenerator, ConvergenceError, floquet_steady_state
from .spectrum import _gauss_nodes


class ResolutionWarning(UserWarning):
    """Sideband integration window overlaps another predicted line."""


@dataclass(frozen=True)
class CoolingPoint:
    """Signed phonon rate (photons * phonons / s) at one drive condition.

    rate < 0 removes phonons.  |rate| <= 2 * gamma * rho_ee always (the
    phonon change per photon is bounded by 2).
    """

    drive: DriveConfig
    rate: float
    rho_ee: float


def cooling_rate_closed_form(config: DriveConfig, emitter: EmitterParams,
                             rho_ee: float) -> CoolingPoint:
    """Closed-form rate; rho_ee is the period-averaged excited population."""
    d = config.delta.rad
    wl = config.rabi_L.rad
    ws_drive = config.rabi_S.rad
    wr = config.rabi_R.rad
    ws = config.omega_S.rad
    if wr == 0.0:
        raise DomainError("undriven, resonant config has no cooling axis "
                          "(generalized Rabi frequency is zero)")
    numerator = wl * wl * ws_drive * ws_drive
    if numerator == 0.0:
        rate = 0.0
    else:
        denom = (ws - wr) ** 2 * wr * wr + numerator
        rate = (d / wr) * (numerator / denom) * emitter.gamma.rad * rho_ee
    return CoolingPoint(config, rate, rho_ee)


def cooling_rate_from_table(config: DriveConfig, emitter: EmitterParams,
                            rho_ee: float) -> CoolingPoint:
    """Rate from the dressed transition table: sum of delta_N * weight
    over the 12 transitions, times the photon emission rate gamma*rho_ee."""
    mean_dn = sum(r.delta_n_phonon * r.dipole_weight
                  for r in transition_table(config))
    return CoolingPoint(config, mean_dn * emitter.gamma.rad * rho_ee, rho_ee)


def cooling_rate_from_spectrum(spec: Spectrum, omega_S, window) -> float:
    """Proportional cooling rate from the two first-order phonon sidebands.

    Integrates the spectrum in windows of half-width `window` around
    -omega_S and +omega_S (offsets from the laser) after subtracting a
    straight baseline through the window edges, and returns
    I(-omega_S) - I(+omega_S).  Warns when another predicted transition
    line falls inside either window or within a quarter-window guard band
    of its edge (a line shoulder on the baseline anchor corrupts the
    subtraction well before the line center enters the window).
    """
    ws = _as_rad(omega_S)
    half = _as_rad(window)
    if half <= 0:
        raise ValueError("window must be positive")
    if spec.freqs[0] > -ws - half or spec.freqs[-1] < ws + half:
        raise ValueError("spectrum grid does not cover both sidebands")

    if spec.drive is not None:
        others = [r.offset.rad for r in transition_table(spec.drive)
                  if r.sideband == 0 or abs(abs(r.offset.rad) - ws) > 1e-6 * ws]
        for center in (-ws, ws):
            near = [o for o in others if abs(o - center) < 1.25 * half]
            if near:
                warnings.warn(
                    f"predicted line(s) at {[f'{o / (2 * math.pi * 1e9):.3f}' for o in near]} GHz "
                    f"fall inside the sideband window at "
                    f"{center / (2 * math.pi * 1e9):.3f} GHz",
                    ResolutionWarning, stacklevel=2)

    def windowed(center: float) -> float:
        sel = (spec.freqs >= center - half) & (spec.freqs <= center + half)
        f = spec.freqs[sel]
        y = spec.intensity[sel]
        baseline = y[0] + (y[-1] - y[0]) * (f - f[0]) / (f[-1] - f[0])
        total = float(np.trapezoid(y - baseline, f))
        csel = ((spec.coherent_freqs >= center - half)
                & (spec.coherent_freqs <= center + half))
        return total + float(np.sum(spec.coherent_weights[csel]))

    return windowed(-ws) - windowed(ws)


@dataclass(frozen=True)
class CoolingMap:
    """Closed-form cooling rate on a (delta, rabi_L) grid.

    rate and rho_ee are indexed [i_delta, j_rabi]; both are averaged over
    the Gaussian detuning distribution when diffusion_fwhm > 0 (the
    excited population is recomputed at every quadrature node).
    """

    deltas: np.ndarray
    rabi_Ls: np.ndarray
    rate: np.ndarray
    rho_ee: np.ndarray
    meta: dict = field(default_factory=dict)

    def point(self, i: int, j: int, template: DriveConfig) -> CoolingPoint:
        cfg = DriveConfig(Frequency(float(self.deltas[i])),
                          Frequency(float(self.rabi_Ls[j])),
                          template.rabi_S, template.omega_S)
        return CoolingPoint(cfg, float(self.rate[i, j]),
                            float(self.rho_ee[i, j]))


def _floquet_rho_ee(config: DriveConfig, emitter: EmitterParams,
                    tol: float = 1e-9) -> float:
    gen = BlochGenerator(config, emitter)
    return floquet_steady_state(gen, tol=tol).mean_rho_ee


def cooling_map(deltas, rabi_Ls, emitter: EmitterParams,
                template: DriveConfig, diffusion_fwhm=Frequency(0.0),
                n_nodes: int = 9, floquet_tol: float = 1e-9) -> CoolingMap:
    """Closed-form rate over a detuning x Rabi-frequency grid.

    Per grid point: Floquet period-averaged excited population, closed-form
    rate, then Gaussian detuning average (diffusion_fwhm = 0 skips it).
    """
    deltas = np.atleast_1d(np.asarray([_as_rad(d) for d in np.atleast_1d(deltas)]))
    rabi_Ls = np.atleast_1d(np.asarray([_as_rad(r) for r in np.atleast_1d(rabi_Ls)]))
    if deltas.size == 0 or rabi_Ls.size == 0:
        raise ValueError("grid must be nonempty")
    fwhm = _as_rad(diffusion_fwhm)
    if fwhm > 0:
        offsets, weights = _gauss_nodes(fwhm, n_nodes)
    else:
        offsets, weights = np.zeros(1), np.ones(1)

    rate = np.empty((deltas.size, rabi_Ls.size))
    rho = np.empty_like(rate)
    failures = []
    for j, wl in enumerate(rabi_Ls):
        for i, d in enumerate(deltas):
            try:
                r_acc = 0.0
                p_acc = 0.0
                for off, wt in zip(offsets, weights):
                    cfg = DriveConfig(Frequency(d + off), Frequency(wl),
                                      template.rabi_S, template.omega_S)
                    p = _floquet_rho_ee(cfg, emitter, floquet_tol)
                    r_acc += wt * cooling_rate_closed_form(cfg, emitter, p).rate
                    p_acc += wt * p
                rate[i, j] = r_acc
                rho[i, j] = p_acc
            except Exception as exc:
                failures.append(((i, j), exc))
    if failures:
        detail = "; ".join(f"{ij}: {exc}" for ij, exc in failures[:5])
        raise RuntimeError(f"cooling_map failed at {len(failures)} "
                           f"point(s): {detail}")
    return CoolingMap(deltas, rabi_Ls, rate, rho,
                      meta={"diffusion_fwhm": fwhm, "n_nodes": len(offsets),
                            "rabi_S": template.rabi_S.rad,
                            "omega_S": template.omega_S.rad,
                            "gamma": emitter.gamma.rad})


# ---------------------------------------------------------------------------
# Quantized phonon mode: Lindblad steady state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LindbladConfig:
    """Inputs of the quantized steady-state solve.

    The acoustic drive is absent here: the laser alone cools or heats the
    thermal phonon mode through the sigma_z coupling.  m_max is the Fock
    truncation; it is auto-raised until the thermal tail beyond it is
    below tail_mass, then adaptively refined.
    """

    emitter: EmitterParams
    drive: DriveConfig
    cavity: AcousticCavity
    temperature: float
    m_max: int = 0          # 0: derive from the thermal tail bound
    tail_mass: float = 1e-8

    def __post_init__(self):
        if not self.temperature > 0:
            raise DomainError("temperature must be positive")
        if self.m_max < 0:
            raise DomainError("m_max must be >= 0")

    @property
    def m_th(self) -> float:
        return thermal_occupation(self.cavity.omega_S, self.temperature)

    def initial_m_max(self) -> int:
        m_th = self.m_th
        ratio = m_th / (m_th + 1.0)
        tail = max(1, math.ceil(math.log(self.tail_mass) / math.log(ratio)))
        return max(self.m_max, tail, 1)


@dataclass(frozen=True)
class SteadyStateResult:
    """Steady phonon number, cooling performance, and solve diagnostics."""

    m_ss: float
    cooling_C: float
    trace_error: float
    min_eigenvalue: float
    residual_norm: float
    m_max_used: int
    m_th: float

    def __post_init__(self):
        if self.trace_error > 1e-6:
            raise ConvergenceError("steady-state trace error out of range",
                                   residual=self.trace_error)
        if self.min_eigenvalue < -1e-6:
            raise ConvergenceError("steady state is far from positive",
                                   residual=-self.min_eigenvalue)


def _phonon_ops(n_fock: int):
    ms = np.arange(n_fock)
    b = sp.diags(np.sqrt(ms[1:]), 1, format="csr")
    num = sp.diags(ms.astype(float), 0, format="csr")
    return b, num


def _liouvillian_parts(cfg: LindbladConfig, n_fock: int):
    """Sparse Liouvillian split as (delta-independent part, delta coefficient)."""
    return _liouvillian_parts_cached(
        cfg.drive.rabi_L.rad, cfg.cavity.omega_S.rad, cfg.cavity.g0.rad,
        cfg.emitter.gamma.rad, cfg.cavity.dissipation.rad, cfg.m_th, n_fock)


@lru_cache(maxsize=8)
def _liouvillian_parts_cached(wl: float, ws: float, g0: float, gamma: float,
                              gamma_s: float, m_th: float, n_fock: int):
    sz = sp.csr_matrix(np.diag([1.0, -1.0]))
    sx = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    sm = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
    ident_s = sp.identity(2, format="csr")
    b, num = _phonon_ops(n_fock)
    ident_f = sp.identity(n_fock, format="csr")

    h_fixed = (0.5 * wl * sp.kron(sx, ident_f)
               + ws * sp.kron(ident_s, num)
               + 0.5 * g0 * sp.kron(sz, b + b.T)).tocsr()
    h_delta = (-0.5) * sp.kron(sz, ident_f).tocsr()  # multiplied by delta

    jumps = [math.sqrt(gamma) * sp.kron(sm, ident_f),
             math.sqrt(gamma_s * m_th) * sp.kron(ident_s, b.T),
             math.sqrt(gamma_s * (m_th + 1.0)) * sp.kron(ident_s, b)]

    dim = 2 * n_fock
    ident = sp.identity(dim, format="csr")

    def commutator_super(h):
        return -1j * (sp.kron(ident, h) - sp.kron(h.T, ident))

    l_fixed = commutator_super(h_fixed)
    for c in jumps:
        c = c.tocsr()
        cdc = (c.conjugate().T @ c).tocsr()
        l_fixed = (l_fixed + sp.kron(c.conjugate(), c)
                   - 0.5 * sp.kron(ident, cdc)
                   - 0.5 * sp.kron(cdc.T, ident))
    l_delta = commutator_super(h_delta)
    return l_fixed.tocsr(), l_delta.tocsr()


def _solve_steady(l_total: sp.csr_matrix, n_fock: int):
    """Null vector with unit trace via a weighted trace row added to row 0.

    The minimum-degree ordering on A + A^T exploits the near-symmetric
    lattice structure of the Liouvillian; it is an order of magnitude
    faster than column orderings on the large Fock spaces.
    """
    dim = 2 * n_fock
    size = dim * dim
    weight = float(np.mean(np.abs(l_total.data)))
    trace_cols = np.arange(dim) * (dim + 1)
    trace_row = sp.csr_matrix(
        (np.full(dim, weight), (np.zeros(dim, dtype=int), trace_cols)),
        shape=(size, size))
    rhs = np.zeros(size, dtype=complex)
    rhs[0] = weight
    lu = splu((l_total + trace_row).tocsc(), permc_spec="MMD_AT_PLUS_A")
    x = lu.solve(rhs)
    rho = x.reshape((dim, dim), order="F")
    residual = float(np.linalg.norm(l_total @ x, np.inf))
    return rho, residual


def lindblad_steady_state(cfg: LindbladConfig, adaptive: bool = True,
                          rel_tol: float = 1e-4,
                          max_rounds: int = 12) -> SteadyStateResult:
    """Steady state of the quantized emitter-phonon master equation.

    Builds the Liouvillian on the 2*(m_max+1)-dimensional Hilbert space and
    solves the null-space problem directly with a unit-trace constraint.
    With adaptive=True the Fock truncation grows by 25% until the steady
    phonon number changes by less than rel_tol.
    """
    m_th = cfg.m_th
    m = cfg.initial_m_max()
    previous = None
    for _ in range(max_rounds):
        n_fock = m + 1
        l_fixed, l_delta = _liouvillian_parts(cfg, n_fock)
        l_total = (l_fixed + cfg.drive.delta.rad * l_delta).tocsr()
        rho, residual = _solve_steady(l_total, n_fock)
        rho = 0.5 * (rho + rho.conjugate().T)
        trace_error = abs(float(np.trace(rho).real) - 1.0)
        diag = np.real(np.diag(rho))
        m_ss = float(np.sum(np.tile(np.arange(n_fock), 2) * diag))
        if not adaptive:
            min_eig = float(np.linalg.eigvalsh(rho)[0])
            return SteadyStateResult(m_ss, (m_ss - m_th) / m_th, trace_error,
                                     min_eig, residual, m, m_th)
        if previous is not None and abs(m_ss - previous) <= rel_tol * abs(m_ss):
            min_eig = float(np.linalg.eigvalsh(rho)[0])
            return SteadyStateResult(m_ss, (m_ss - m_th) / m_th, trace_error,
                                     min_eig, residual, m, m_th)
        previous = m_ss
        m = math.ceil(1.25 * m)
    raise ConvergenceError(
        f"Fock truncation did not converge below {rel_tol:g} "
        f"(last m_ss = {previous:.6g})", residual=float("nan"))


@dataclass(frozen=True)
class LindbladMap:
    """Cooling performance C on a (delta, rabi_L) grid, [i_delta, j_rabi]."""

    deltas: np.ndarray
    rabi_Ls: np.ndarray
    cooling_C: np.ndarray
    m_ss: np.ndarray
    worst_trace_error: float
    worst_min_eigenvalue: float
    meta: dict = field(default_factory=dict)


def cooling_performance_map(deltas, rabi_Ls, cfg: LindbladConfig,
                            diffusion_fwhm=Frequency(0.0), n_nodes: int = 5,
                            adaptive: bool = False,
                            average: str = "C") -> LindbladMap:
    """Quantized cooling performance over a (delta, rabi_L) grid.

    The Gaussian detuning average is applied to C per grid point (set
    average="m_ss" to average the phonon number instead and derive C from
    it).  adaptive=False keeps the configured Fock truncation for every
    point, which is what a fixed-size map wants.
    """
    deltas = np.atleast_1d(np.asarray([_as_rad(d) for d in np.atleast_1d(deltas)]))
    rabi_Ls = np.atleast_1d(np.asarray([_as_rad(r) for r in np.atleast_1d(rabi_Ls)]))
    if deltas.size == 0 or rabi_Ls.size == 0:
        raise ValueError("grid must be nonempty")
    if average not in ("C", "m_ss"):
        raise ValueError('average must be "C" or "m_ss"')
    fwhm = _as_rad(diffusion_fwhm)
    if fwhm > 0:
        offsets, weights = _gauss_nodes(fwhm, n_nodes)
    else:
        offsets, weights = np.zeros(1), np.ones(1)

    c_map = np.empty((deltas.size, rabi_Ls.size))
    m_map = np.empty_like(c_map)
    worst_trace = 0.0
    worst_eig = 0.0
    failures = []
    for j, wl in enumerate(rabi_Ls):
        for i, d in enumerate(deltas):
            try:
                c_acc = 0.0
                m_acc = 0.0
                for off, wt in zip(offsets, weights):
                    drive = DriveConfig(Frequency(d + off), Frequency(wl),
                                        cfg.drive.rabi_S, cfg.drive.omega_S)
                    node_cfg = LindbladConfig(cfg.emitter, drive, cfg.cavity,
                                              cfg.temperature, cfg.m_max,
                                              cfg.tail_mass)
                    res = lindblad_steady_state(node_cfg, adaptive=adaptive)
                    c_acc += wt * res.cooling_C
                    m_acc += wt * res.m_ss
                    worst_trace = max(worst_trace, res.trace_error)
                    worst_eig = min(worst_eig, res.min_eigenvalue)
                if average == "C":
                    c_map[i, j] = c_acc
                    m_map[i, j] = m_acc
                else:
                    m_map[i, j] = m_acc
                    c_map[i, j] = (m_acc - cfg.m_th) / cfg.m_th
            except Exception as exc:
                failures.append(((i, j), exc))
    if failures:
        detail = "; ".join(f"{ij}: {exc}" for ij, exc in failures[:5])
        raise RuntimeError(f"cooling_performance_map failed at "
                           f"{len(failures)} point(s): {detail}")
    return LindbladMap(deltas, rabi_Ls, c_map, m_map, worst_trace, worst_eig,
                       meta={"diffusion_fwhm": fwhm, "n_nodes": len(offsets),
                             "temperature": cfg.temperature,
                             "m_th": cfg.m_th, "average": average})
