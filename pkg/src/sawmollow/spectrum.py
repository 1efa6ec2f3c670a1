"""Resonance fluorescence spectra via the quantum regression theorem.

Pipeline: Floquet limit cycle -> two-time correlator <s+(t) s-(t+tau)>
averaged over the acoustic phase -> one-sided Fourier transform relative to
the laser -> Gaussian spectral-diffusion average -> etalon convolution.

The regression step uses the linearity of the Bloch equations: a regression
initial condition rho(t0) s+ maps to the generalized expectation vector
u = (0, rho_ee(t0), -<s+>(t0)) with the constant term of the equations
scaled by tr[rho(t0) s+] = <s+>(t0).  All phase offsets t0 reuse one
fundamental-matrix integration, since u(t0 + tau) =
Phi(t0+tau) c + <s+>(t0) p(t0+tau) with c fixed by the initial condition.

The correlator does not decay to zero: coherent scattering leaves a
periodic plateau whose harmonics transform into delta lines at multiples
of the acoustic frequency.  The plateau is removed exactly (its harmonic
coefficients follow from the Floquet solution) and recorded as discrete
coherent weights on the Spectrum.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bloch import (
    BlochGenerator,
    floquet_steady_state,
    periodic_fundamental,
)
from .model import DriveConfig, EmitterParams, Frequency, Spectrum, TWO_PI, _as_rad


class GridMismatchError(ValueError):
    """Spectra being combined live on different frequency grids."""


class AliasingError(ValueError):
    """Requested window exceeds the etalon free spectral range."""


class UndecayedCorrelatorError(ValueError):
    """Correlator has not decayed; a longer tau_max is required."""


@dataclass(frozen=True)
class InstrumentModel:
    """Spectral diffusion plus scanning-etalon response.

    diffusion_fwhm : Gaussian FWHM of the slow detuning drift
    etalon_fwhm    : Lorentzian FWHM of the etalon transmission
    etalon_fsr     : free spectral range (single-order windows only)
    """

    diffusion_fwhm: Frequency = Frequency(0.0)
    etalon_fwhm: Frequency = Frequency(0.0)
    etalon_fsr: Frequency = Frequency.from_ghz(20.0)

    def __post_init__(self):
        if self.diffusion_fwhm.rad < 0 or self.etalon_fwhm.rad < 0:
            raise ValueError("instrument widths must be non-negative")
        if self.etalon_fsr.rad <= self.etalon_fwhm.rad:
            raise ValueError("etalon FSR must exceed its linewidth")

    @classmethod
    def measured(cls) -> "InstrumentModel":
        """Calibrated values of the reference setup (678 MHz diffusion,
        525 MHz etalon, 20 GHz FSR)."""
        return cls(Frequency.from_ghz(0.678), Frequency.from_ghz(0.525),
                   Frequency.from_ghz(20.0))


@dataclass(frozen=True)
class CorrelatorSeries:
    """Phase-averaged two-time correlator on a uniform tau grid.

    values[0] equals the phase-averaged excited population.  The periodic
    coherent plateau is sum_k plateau_coeffs[k] e^{i k omega_S tau} over
    plateau_orders; subtracting it leaves the decaying incoherent part.
    """

    taus: np.ndarray
    values: np.ndarray
    drive: DriveConfig
    plateau_orders: np.ndarray
    plateau_coeffs: np.ndarray
    n_phase: int
    rho_ee_bar: float
    meta: dict = field(default_factory=dict)

    @property
    def dtau(self) -> float:
        return float(self.taus[1] - self.taus[0])

    def plateau(self, taus=None) -> np.ndarray:
        taus = self.taus if taus is None else np.asarray(taus, dtype=float)
        w = self.drive.omega_S.rad
        phases = np.exp(1j * np.multiply.outer(taus, self.plateau_orders * w))
        return phases @ self.plateau_coeffs

    def incoherent(self) -> np.ndarray:
        return self.values - self.plateau()


def two_time_correlator(gen: BlochGenerator, tau_max: float, dtau: float,
                        n_phase: int = 16, floquet_tol: float = 1e-10,
                        ode_tol: float = 1e-10) -> CorrelatorSeries:
    """Steady-state correlator <s+(t0) s-(t0+tau)> averaged over n_phase
    start times t0 spanning one acoustic period of the limit cycle.

    The tau step is snapped down so that the phase offsets fall on the
    sample grid; the returned series reports the actual step used.
    """
    if not tau_max > 0:
        raise ValueError("tau_max must be positive")
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    if n_phase < 1:
        raise ValueError("n_phase must be >= 1")

    period = gen.period
    stride = max(1, math.ceil(period / (n_phase * dtau)))
    dtau_eff = period / (n_phase * stride)
    n_tau = math.ceil(tau_max / dtau_eff) + 1
    n_per = n_phase * stride

    fs = floquet_steady_state(gen, tol=floquet_tol)
    t0s = np.arange(n_phase) * (stride * dtau_eff)
    x0 = fs.evaluate(t0s)                      # limit cycle at the t0 samples
    sp0 = x0[:, 0]
    rho0 = 0.5 * (1.0 + x0[:, 2].real)

    # One-period fundamental samples; Phi(kT + s) = Phi(s) Phi(T)^k and
    # p(kT + s) = Phi(s) p(kT) + p(s) extend them to the full tau horizon.
    phi, part = periodic_fundamental(gen, n_per, tol=ode_tol)
    mono = phi[n_per]
    p_period = part[n_per]

    g_max = (n_phase - 1) * stride + n_tau - 1
    n_wraps = g_max // n_per + 1
    taus = np.arange(n_tau) * dtau_eff

    # w[j, k] = Phi(T)^k c_j + sp_j p(kT) obeys w[., k+1] = w[., k] M^T + sp p_T.
    w = np.empty((n_phase, n_wraps, 3), dtype=complex)
    for j in range(n_phase):
        base = j * stride
        u0 = np.array([0.0, rho0[j], -sp0[j]], dtype=complex)
        w[j, 0] = np.linalg.solve(phi[base], u0 - sp0[j] * part[base])
    for k in range(1, n_wraps):
        w[:, k] = w[:, k - 1] @ mono.T + sp0[:, None] * p_period

    acc = np.zeros(n_tau, dtype=complex)
    phi_row = phi[:n_per, 1, :]
    p_row = part[:n_per, 1]
    for j in range(n_phase):
        g = j * stride + np.arange(n_tau)
        wraps, samples = np.divmod(g, n_per)
        acc += (np.einsum("ik,ik->i", phi_row[samples], w[j, wraps])
                + sp0[j] * p_row[samples])
    values = acc / n_phase

    # Plateau harmonics: the tau -> inf limit is the phase-averaged product
    # of <s+> with the limit-cycle <s->, whose coefficients are m_k q_k.
    orders = fs.orders
    w = gen.drive.omega_S.rad
    m_k = fs.component_harmonics(1)
    q_k = np.array([np.mean(sp0 * np.exp(1j * k * w * t0s)) for k in orders])
    coeffs = m_k * q_k

    return CorrelatorSeries(
        taus=taus, values=values, drive=gen.drive,
        plateau_orders=orders, plateau_coeffs=coeffs,
        n_phase=n_phase, rho_ee_bar=float(np.mean(rho0)),
        meta={"floquet_residual": fs.residual, "n_harmonics": fs.n_harmonics,
              "dtau_requested": dtau, "ode_tol": ode_tol})


def transform_correlator(corr: CorrelatorSeries, freqs: np.ndarray,
                         decay_tol: float = 1e-4) -> Spectrum:
    """One-sided Fourier transform of the correlator onto a frequency grid.

    Implements S(nu) = (1/pi) Re int_0^inf C(tau) e^{i nu tau} dtau for the
    incoherent part by trapezoidal quadrature; the coherent plateau is
    carried as exact delta weights at multiples of the acoustic frequency.
    freqs are offsets from the laser in rad/s, strictly increasing (not
    necessarily uniform).
    """
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or freqs.size < 2 or not np.all(np.diff(freqs) > 0):
        raise ValueError("freqs must be a strictly increasing 1-d grid")
    nu_max = float(np.max(np.abs(freqs)))
    if nu_max * corr.dtau >= math.pi:
        raise ValueError(
            f"tau step {corr.dtau:.3e} s aliases the requested window; need "
            f"dtau < {math.pi / nu_max:.3e} s")

    c_inc = corr.incoherent()
    tail = abs(c_inc[-1])
    scale = abs(corr.values[0])
    if tail > decay_tol * scale:
        needed = corr.taus[-1] * (1.0 + 2.0 * math.log(tail / (decay_tol * scale)))
        raise UndecayedCorrelatorError(
            f"incoherent correlator tail {tail:.3e} exceeds {decay_tol:.0e} x "
            f"C(0) = {decay_tol * scale:.3e}; increase tau_max to roughly "
            f"{needed:.3e} s")

    weights = np.full(corr.taus.size, corr.dtau)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    wc = weights * c_inc
    intensity = np.empty(freqs.size)
    chunk = 512
    for lo in range(0, freqs.size, chunk):
        hi = min(lo + chunk, freqs.size)
        kernel = np.exp(1j * np.outer(freqs[lo:hi], corr.taus))
        intensity[lo:hi] = (kernel @ wc).real / math.pi

    peak = float(np.max(intensity)) if intensity.size else 0.0
    trough = float(np.min(intensity)) if intensity.size else 0.0
    # Truncating the correlator at the decay tolerance leaves ringing of
    # that relative size in the transform; dips beyond it by orders of
    # magnitude mean the correlator and grid are inconsistent.
    if trough < -1e-3 * peak:
        raise RuntimeError(
            f"transform produced intensity {trough:.3e} against peak "
            f"{peak:.3e}; correlator grid is inconsistent")
    intensity = np.maximum(intensity, -1e-9 * peak)

    coh_w = corr.plateau_coeffs.real.copy()
    keep = coh_w > 1e-14 * max(scale, 1e-300)
    coh_f = corr.plateau_orders[keep] * corr.drive.omega_S.rad
    coh_w = coh_w[keep]
    order = np.argsort(coh_f)

    meta = dict(corr.meta)
    meta.update({"rho_ee_bar": corr.rho_ee_bar, "n_phase": corr.n_phase,
                 "tau_max": float(corr.taus[-1]), "dtau": corr.dtau,
                 "min_intensity_preclip": trough})
    return Spectrum(freqs, intensity, corr.drive,
                    coherent_freqs=coh_f[order], coherent_weights=coh_w[order],
                    meta=meta)


def emission_spectrum(corr: CorrelatorSeries, freq_window, n_freq: int,
                      decay_tol: float = 1e-4) -> Spectrum:
    """Spectrum on a uniform grid over freq_window = (lo, hi) around the laser."""
    lo, hi = (_as_rad(freq_window[0]), _as_rad(freq_window[1]))
    if not hi > lo:
        raise ValueError("freq_window must be increasing")
    if n_freq < 2:
        raise ValueError("n_freq must be >= 2")
    return transform_correlator(corr, np.linspace(lo, hi, n_freq), decay_tol)


def _gauss_nodes(fwhm_rad: float, n_nodes: int):
    """Gauss-Hermite nodes/weights for averaging over a Gaussian of given FWHM."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("n_nodes must be odd and >= 3")
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    sigma = fwhm_rad / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi)


def apply_spectral_diffusion(spectra_fn, delta0, model: InstrumentModel,
                             n_nodes: int = 21) -> Spectrum:
    """Average spectra over a Gaussian distribution of the laser detuning.

    spectra_fn maps a detuning (rad/s) to a Spectrum on a fixed grid;
    delta0 is the nominal detuning.  Gauss-Hermite quadrature with n_nodes
    (odd, >= 3) nodes; a zero diffusion width returns spectra_fn(delta0).
    """
    delta0 = _as_rad(delta0)
    fwhm = model.diffusion_fwhm.rad
    if fwhm == 0.0:
        return spectra_fn(delta0)
    offsets, weights = _gauss_nodes(fwhm, n_nodes)

    first = None
    intensity = None
    coherent: dict[float, float] = {}
    rho_acc = 0.0
    for off, wt in zip(offsets, weights):
        spec = spectra_fn(delta0 + off)
        if first is None:
            first = spec
            intensity = wt * spec.intensity
        else:
            if not np.array_equal(spec.freqs, first.freqs):
                raise GridMismatchError("spectra_fn returned a different grid")
            intensity = intensity + wt * spec.intensity
        # Coherent lines sit at integer multiples of the acoustic frequency
        # regardless of detuning; merge them by position.
        for nu, weight in zip(spec.coherent_freqs, spec.coherent_weights):
            coherent[float(nu)] = coherent.get(float(nu), 0.0) + wt * weight
        rho_acc += wt * spec.meta.get("rho_ee_bar", math.nan)

    meta = dict(first.meta)
    meta.update({"diffusion_fwhm": fwhm, "diffusion_nodes": n_nodes,
                 "rho_ee_bar": rho_acc, "delta0": delta0})
    peak = float(np.max(intensity))
    intensity = np.maximum(intensity, -1e-9 * peak)
    coh_f = np.array(sorted(coherent))
    coh_w = np.array([coherent[f] for f in coh_f])
    # Node spectra share the laser-relative grid; report the nominal detuning.
    return Spectrum(first.freqs, intensity, first.drive.replace_delta(delta0),
                    coherent_freqs=coh_f, coherent_weights=coh_w, meta=meta)


def _lorentzian(nu: np.ndarray, fwhm: float) -> np.ndarray:
    hw = 0.5 * fwhm
    return (hw / math.pi) / (nu * nu + hw * hw)


def apply_etalon(spec: Spectrum, model: InstrumentModel) -> Spectrum:
    """Convolve with the etalon's unit-area Lorentzian transmission.

    Quadrature columns are renormalized on the finite window so the
    trapezoid integral is conserved exactly; coherent delta lines fold in
    analytically as Lorentzians carrying their full weight.  Windows wider
    than the free spectral range would alias neighboring orders and are
    rejected.
    """
    fwhm = model.etalon_fwhm.rad
    window = float(spec.freqs[-1] - spec.freqs[0])
    if window > model.etalon_fsr.rad * (1.0 + 1e-12):
        raise AliasingError(
            f"window {window / TWO_PI / 1e9:.3f} GHz exceeds the etalon free "
            f"spectral range {model.etalon_fsr.ghz:.3f} GHz")
    if fwhm == 0.0:
        return spec.with_intensity(spec.intensity, {"etalon_fwhm": 0.0})

    freqs = spec.freqs
    n = freqs.size
    w = np.empty(n)
    w[1:-1] = 0.5 * (freqs[2:] - freqs[:-2])
    w[0] = 0.5 * (freqs[1] - freqs[0])
    w[-1] = 0.5 * (freqs[-1] - freqs[-2])

    out = np.zeros(n)
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        cols = _lorentzian(freqs[:, None] - freqs[None, lo:hi], fwhm)
        norms = w @ cols
        out += cols @ (w[lo:hi] * spec.intensity[lo:hi] / norms)

    for nu0, weight in zip(spec.coherent_freqs, spec.coherent_weights):
        col = _lorentzian(freqs - nu0, fwhm)
        out += weight * col / (w @ col)

    peak = float(np.max(out)) if n else 0.0
    out = np.maximum(out, -1e-9 * peak)
    meta = dict(spec.meta)
    meta.update({"etalon_fwhm": fwhm,
                 "folded_coherent_weight": float(np.sum(spec.coherent_weights))})
    return Spectrum(freqs, out, spec.drive, meta=meta)


@dataclass(frozen=True)
class SpectrumPipelineConfig:
    """Numerical knobs of the correlator -> spectrum pipeline."""

    window: tuple = (Frequency.from_ghz(-12.0), Frequency.from_ghz(12.0))
    n_freq: int = 2001
    n_phase: int = 16
    tau_lifetimes: float = 30.0    # tau_max in units of 1/gamma
    nyquist_margin: float = 4.0    # dtau = pi / (margin * max |window|)
    n_diffusion_nodes: int = 21
    floquet_tol: float = 1e-10
    ode_tol: float = 1e-10

    def tau_grid(self, gamma_rad: float):
        lo, hi = _as_rad(self.window[0]), _as_rad(self.window[1])
        nu_max = max(abs(lo), abs(hi))
        dtau = math.pi / (self.nyquist_margin * nu_max)
        return self.tau_lifetimes / gamma_rad, dtau


def single_spectrum(config: DriveConfig, emitter: EmitterParams,
                    pipeline: SpectrumPipelineConfig | None = None) -> Spectrum:
    """Pre-instrument spectrum of one drive condition."""
    pipeline = pipeline or SpectrumPipelineConfig()
    tau_max, dtau = pipeline.tau_grid(emitter.gamma.rad)
    gen = BlochGenerator(config, emitter)
    corr = two_time_correlator(gen, tau_max, dtau, pipeline.n_phase,
                               pipeline.floquet_tol, pipeline.ode_tol)
    return emission_spectrum(corr, pipeline.window, pipeline.n_freq)


def _map_one(args):
    config, emitter, instrument, pipeline = args
    if instrument is not None and instrument.diffusion_fwhm.rad > 0:
        spec = apply_spectral_diffusion(
            lambda d: single_spectrum(config.replace_delta(d), emitter, pipeline),
            config.delta, instrument, pipeline.n_diffusion_nodes)
    else:
        spec = single_spectrum(config, emitter, pipeline)
    if instrument is not None and instrument.etalon_fwhm.rad > 0:
        spec = apply_etalon(spec, instrument)
    return spec


def spectrum_map(sweep, emitter: EmitterParams,
                 instrument: InstrumentModel | None = None,
                 pipeline: SpectrumPipelineConfig | None = None,
                 jobs: int = 1) -> list[Spectrum]:
    """Full pipeline over a sweep of drive configs, order-preserving.

    Per-config failures are aggregated and reported with their indices.
    """
    sweep = list(sweep)
    if not sweep:
        raise ValueError("sweep must be nonempty")
    pipeline = pipeline or SpectrumPipelineConfig()
    tasks = [(cfg, emitter, instrument, pipeline) for cfg in sweep]
    results = [None] * len(tasks)
    failures = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_map_one, task) for task in tasks]
            for i, future in enumerate(futures):
                try:
                    results[i] = future.result()
                except Exception as exc:
                    failures.append((i, exc))
    else:
        for i, task in enumerate(tasks):
            try:
                results[i] = _map_one(task)
            except Exception as exc:  # aggregate, do not stop the sweep
                failures.append((i, exc))
    if failures:
        detail = "; ".join(f"index {i}: {exc}" for i, exc in failures)
        raise RuntimeError(f"spectrum_map failed for {len(failures)} "
                           f"config(s): {detail}")
    return results
