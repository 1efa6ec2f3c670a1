"""Command-line front end: figure-style pipelines with bit-stable outputs.

Subcommands map onto the library: `spectrum` / `spectrum-map` (emission
spectra over drive sweeps), `dressed-lines` (the nine predicted line
positions), `cooling-map` (closed-form phonon rate over a detuning x Rabi
grid), `lindblad-map` (quantized cooling performance), the `fit-*` and
`background` calibration commands, and `selftest`.

Outputs are deterministic: repeated runs of the same resolved config are
byte-identical.  Every file embeds the resolved configuration, physical
constants, and solver tolerances in its header.  Exit codes: 0 success,
2 configuration error, 3 numerical non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .bloch import (
    BlochGenerator,
    BlochState,
    ConvergenceError,
    DegenerateSystemError,
    IntegrationError,
    floquet_steady_state,
    monodromy,
    propagate,
)
from .cooling import (
    AcousticCavity,
    LindbladConfig,
    cooling_map,
    cooling_performance_map,
    cooling_rate_closed_form,
    cooling_rate_from_table,
)
from .dressed import overlay_lines, table_from_angles
from .fitting import (
    AbsorptionModel,
    FitReport,
    background_extrapolate,
    fit_absorption,
    fit_linear_through_origin,
    fit_lorentzian,
    load_two_column,
)
from .model import (
    HBAR,
    KB,
    DEVICE_DIFFUSION_GHZ,
    DEVICE_ETALON_FSR_GHZ,
    DEVICE_G0_GHZ,
    DEVICE_GAMMA_GHZ,
    DEVICE_OMEGA_S_GHZ,
    DEVICE_Q_FACTOR,
    DomainError,
    DriveConfig,
    EmitterParams,
    Frequency,
    Spectrum,
    thermal_occupation,
)
from .spectrum import (
    InstrumentModel,
    SpectrumPipelineConfig,
    UndecayedCorrelatorError,
    spectrum_map,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3
EXIT_IO = 4

GHZ = 2.0 * math.pi * 1e9


class ConfigError(ValueError):
    """Bad command-line or config-file input."""


def _fmt(x) -> str:
    """Locale-independent number formatting with full double precision."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _json_dump(obj, out, indent=0):
    """Minimal JSON writer: sorted keys, 17-significant-digit floats."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        keys = sorted(obj, key=str)
        for i, k in enumerate(keys):
            out.write(f'{pad}  "{k}": ')
            _json_dump(obj[k], out, indent + 1)
            out.write(",\n" if i < len(keys) - 1 else "\n")
        out.write(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.write("[]")
            return
        out.write("[")
        for i, v in enumerate(seq):
            _json_dump(v, out, indent)
            if i < len(seq) - 1:
                out.write(", ")
        out.write("]")
    elif isinstance(obj, str):
        escaped = obj.replace("\\", "\\\\").replace('"', '\\"')
        out.write(f'"{escaped}"')
    elif obj is None:
        out.write("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.write("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    else:
        v = float(obj)
        out.write('"nan"' if math.isnan(v) else _fmt(v))


def _metadata(args, extra=None) -> dict:
    meta = {"version": __version__, "hbar_J_s": HBAR, "k_B_J_per_K": KB}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "out", "format") or value is None:
            continue
        meta[key] = value
    if extra:
        meta.update(extra)
    return meta


def emit(rows, columns, path, fmt, meta):
    """Write records as CSV (metadata in '#' header lines) or JSON."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if fmt == "csv":
                for key in sorted(meta):
                    fh.write(f"# {key} = {_fmt(meta[key]) if not isinstance(meta[key], str) else meta[key]}\n")
                fh.write(",".join(columns) + "\n")
                for row in rows:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            else:
                payload = {"meta": meta,
                           "columns": list(columns),
                           "rows": [[(None if (isinstance(v, float) and math.isnan(v)) else v)
                                     for v in row] for row in rows]}
                _json_dump(payload, fh)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _emit_report(report: FitReport | dict, path, fmt, meta):
    if isinstance(report, FitReport):
        payload = {
            "params": report.params,
            "stderr": report.stderr,
            "covariance": [list(map(float, row)) for row in np.atleast_2d(report.covariance)],
            "residual_rms": report.residual_rms,
            "iterations": report.iterations,
            "converged": report.converged,
            "message": report.message,
        }
    else:
        payload = dict(report)
    payload["meta"] = meta
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if fmt == "csv":
                for key in sorted(meta):
                    fh.write(f"# {key} = {meta[key]}\n")
                fh.write("key,value\n")
                flat = dict(payload)
                flat.pop("meta")
                for group in ("params", "stderr"):
                    if group in flat:
                        for k, v in sorted(flat.pop(group).items()):
                            fh.write(f"{group}.{k},{_fmt(v)}\n")
                flat.pop("covariance", None)
                for k, v in sorted(flat.items()):
                    fh.write(f"{k},{v if isinstance(v, str) else _fmt(v)}\n")
            else:
                _json_dump(payload, fh)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Shared argument plumbing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", required=False, help="output file path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: MOLLOW_JOBS or 1)")
    p.add_argument("--tol", type=float, default=1e-10,
                   help="steady-state residual tolerance")


def _add_physics(p, diffusion_default=0.0, etalon_default=0.0):
    p.add_argument("--delta-ghz", type=float, default=0.0)
    p.add_argument("--rabi-l-ghz", type=float, default=2.625)
    p.add_argument("--rabi-s-ghz", type=float, default=1.75)
    p.add_argument("--omega-s-ghz", type=float, default=DEVICE_OMEGA_S_GHZ)
    p.add_argument("--gamma-mhz", type=float, default=DEVICE_GAMMA_GHZ * 1e3)
    p.add_argument("--diffusion-mhz", type=float, default=diffusion_default)
    p.add_argument("--etalon-mhz", type=float, default=etalon_default)
    p.add_argument("--fsr-ghz", type=float, default=DEVICE_ETALON_FSR_GHZ)


def _check_nonneg(args, names):
    for name in names:
        value = getattr(args, name, None)
        if value is not None and value < 0:
            raise ConfigError(f"--{name.replace('_', '-')} must be >= 0")


def _emitter(args) -> EmitterParams:
    if args.gamma_mhz <= 0:
        raise ConfigError("--gamma-mhz must be positive")
    return EmitterParams.from_ghz(args.gamma_mhz / 1e3,
                                  args.diffusion_mhz / 1e3)


def _drive(args, delta=None, rabi_l=None) -> DriveConfig:
    return DriveConfig.from_ghz(
        args.delta_ghz if delta is None else delta,
        args.rabi_l_ghz if rabi_l is None else rabi_l,
        args.rabi_s_ghz, args.omega_s_ghz)


def _instrument(args) -> InstrumentModel | None:
    if args.diffusion_mhz == 0.0 and args.etalon_mhz == 0.0:
        return None
    return InstrumentModel(Frequency.from_ghz(args.diffusion_mhz / 1e3),
                           Frequency.from_ghz(args.etalon_mhz / 1e3),
                           Frequency.from_ghz(args.fsr_ghz))


def _pipeline(args) -> SpectrumPipelineConfig:
    half = args.window_ghz
    return SpectrumPipelineConfig(
        window=(Frequency.from_ghz(-half), Frequency.from_ghz(half)),
        n_freq=args.points, n_phase=args.n_phase,
        n_diffusion_nodes=args.nodes,
        floquet_tol=args.tol, ode_tol=args.tol)


def _jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("MOLLOW_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"MOLLOW_JOBS is not an integer: {env!r}") from exc
    return 1


def _sweep_values(args) -> np.ndarray:
    if args.sweep_points < 1:
        raise ConfigError("--sweep-points must be >= 1")
    return np.linspace(args.sweep_start, args.sweep_stop, args.sweep_points)


def _spectrum_rows(spec: Spectrum, prefix=()):
    for f_ghz, inten in zip(spec.freqs_ghz, spec.intensity):
        yield (*prefix, f_ghz, inten * GHZ)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def cmd_spectrum(args):
    _check_nonneg(args, ["rabi_l_ghz", "rabi_s_ghz", "diffusion_mhz",
                         "etalon_mhz"])
    emitter = _emitter(args)
    drive = _drive(args)
    specs = spectrum_map([drive], emitter, _instrument(args), _pipeline(args),
                         jobs=1)
    spec = specs[0]
    extra = {"rho_ee_bar": spec.meta.get("rho_ee_bar", math.nan),
             "coherent_total": spec.coherent_total}
    for f, w in zip(spec.coherent_freqs, spec.coherent_weights):
        extra[f"coherent_weight_at_{f / GHZ:+.6f}_GHz"] = w
    emit(_spectrum_rows(spec), ["freq_offset_GHz", "intensity"],
         args.out, args.format, _metadata(args, extra))
    return EXIT_OK


def cmd_spectrum_map(args):
    _check_nonneg(args, ["rabi_s_ghz", "diffusion_mhz", "etalon_mhz"])
    emitter = _emitter(args)
    values = _sweep_values(args)
    if args.sweep == "rabi-l":
        sweep = [_drive(args, rabi_l=v) for v in values]
    else:
        sweep = [_drive(args, delta=v) for v in values]
    specs = spectrum_map(sweep, emitter, _instrument(args), _pipeline(args),
                         jobs=_jobs(args))
    rows = []
    for v, spec in zip(values, specs):
        rows.extend(_spectrum_rows(spec, prefix=(v,)))
    col = "rabiL_GHz" if args.sweep == "rabi-l" else "delta_GHz"
    emit(rows, [col, "freq_offset_GHz", "intensity"], args.out, args.format,
         _metadata(args))
    return EXIT_OK


def cmd_dressed_lines(args):
    values = _sweep_values(args)
    if args.sweep == "rabi-l":
        sweep = [_drive(args, rabi_l=v) for v in values]
    else:
        sweep = [_drive(args, delta=v) for v in values]
    rows = []
    for v, (_, lines) in zip(values, overlay_lines(sweep)):
        for line in lines:
            rows.append((v, line.group, line.branch, line.offset.ghz,
                         line.weight))
    col = "rabiL_GHz" if args.sweep == "rabi-l" else "delta_GHz"
    emit(rows, [col, "group", "branch", "freq_offset_GHz", "weight"],
         args.out, args.format, _metadata(args))
    return EXIT_OK


def _grid(args):
    deltas = np.linspace(args.delta_start, args.delta_stop, args.delta_points)
    rabis = np.linspace(args.rabi_start, args.rabi_stop, args.rabi_points)
    if deltas.size < 1 or rabis.size < 1:
        raise ConfigError("grid must be nonempty")
    return deltas, rabis


def cmd_cooling_map(args):
    emitter = _emitter(args)
    deltas_ghz, rabis_ghz = _grid(args)
    template = _drive(args)
    cmap = cooling_map([Frequency.from_ghz(d) for d in deltas_ghz],
                       [Frequency.from_ghz(r) for r in rabis_ghz],
                       emitter, template,
                       diffusion_fwhm=Frequency.from_ghz(args.diffusion_mhz / 1e3),
                       n_nodes=args.nodes)
    rows = []
    for j, r in enumerate(rabis_ghz):
        for i, d in enumerate(deltas_ghz):
            rows.append((d, r, cmap.rate[i, j], cmap.rho_ee[i, j]))
    emit(rows, ["delta_GHz", "rabiL_GHz", "rate_per_s", "rho_ee"],
         args.out, args.format, _metadata(args))
    return EXIT_OK


def cmd_lindblad_map(args):
    if args.temp_k <= 0:
        raise ConfigError("--temp-k must be positive")
    emitter = _emitter(args)
    deltas_ghz, rabis_ghz = _grid(args)
    cavity = AcousticCavity(Frequency.from_ghz(args.omega_s_ghz), args.q,
                            Frequency.from_ghz(args.g0_mhz / 1e3))
    cfg = LindbladConfig(emitter, _drive(args), cavity, args.temp_k,
                         m_max=args.m_max)
    lmap = cooling_performance_map(
        [Frequency.from_ghz(d) for d in deltas_ghz],
        [Frequency.from_ghz(r) for r in rabis_ghz], cfg,
        diffusion_fwhm=Frequency.from_ghz(args.diffusion_mhz / 1e3),
        n_nodes=args.nodes, adaptive=args.adaptive)
    rows = []
    for j, r in enumerate(rabis_ghz):
        for i, d in enumerate(deltas_ghz):
            rows.append((d, r, lmap.m_ss[i, j], lmap.cooling_C[i, j]))
    emit(rows, ["delta_GHz", "rabiL_GHz", "m_ss", "cooling_C"],
         args.out, args.format,
         _metadata(args, {"m_th": cfg.m_th,
                          "worst_trace_error": lmap.worst_trace_error,
                          "worst_min_eigenvalue": lmap.worst_min_eigenvalue}))
    return EXIT_OK


def cmd_fit_absorption(args):
    data = load_two_column(args.data)
    # Data columns: detuning in GHz, counts.
    data = np.column_stack([data[:, 0] * GHZ, data[:, 1]])
    omega_s = Frequency.from_ghz(args.omega_s_ghz)
    init = AbsorptionModel(omega_s, Frequency.from_ghz(args.init_rabi_s_ghz),
                           Frequency.from_ghz(args.init_linewidth_ghz))
    report = fit_absorption(data, omega_s, init)
    if not report.converged:
        raise ConvergenceError(f"absorption fit did not converge: "
                               f"{report.message}", residual=report.residual_rms)
    _emit_report(report, args.out, args.format, _metadata(args))
    return EXIT_OK


def cmd_fit_lorentzian(args):
    report = fit_lorentzian(load_two_column(args.data))
    if not report.converged:
        raise ConvergenceError(f"Lorentzian fit did not converge: "
                               f"{report.message}", residual=report.residual_rms)
    _emit_report(report, args.out, args.format, _metadata(args))
    return EXIT_OK


def cmd_fit_linear(args):
    report = fit_linear_through_origin(load_two_column(args.data),
                                       intercept=args.intercept)
    _emit_report(report, args.out, args.format, _metadata(args))
    return EXIT_OK


def cmd_background(args):
    value, stderr = background_extrapolate(load_two_column(args.data),
                                           args.target)
    _emit_report({"value": value, "stderr": stderr, "target": args.target},
                 args.out, args.format, _metadata(args))
    return EXIT_OK


def cmd_selftest(args):
    """Quick invariant suite; prints one line per check."""
    failures = []

    def check(name, ok, detail=""):
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        if not ok:
            failures.append(name)

    m1 = thermal_occupation(Frequency.from_ghz(3.5299), 1.0)
    m2 = thermal_occupation(Frequency.from_ghz(3.5299), 0.1)
    check("thermal occupation (1 K, 0.1 K)",
          abs(m1 - 5.4) < 0.1 and abs(m2 - 0.2) < 0.05,
          f"m_th = {m1:.3f}, {m2:.3f}")

    rng = np.random.default_rng(20260808)
    worst_sum = worst_id = 0.0
    for _ in range(200):
        tl, ts = rng.uniform(0.0, math.pi / 2, 2)
        rows = table_from_angles(tl, ts, 1.0, 0.3)
        worst_sum = max(worst_sum,
                        abs(sum(r.dipole_weight for r in rows) - 1.0))
        total = sum(r.delta_n_phonon * r.dipole_weight for r in rows)
        part = 2.0 * sum(r.delta_n_phonon * r.dipole_weight
                         for r in rows if r.index in (1, 4, 9, 12))
        worst_id = max(worst_id, abs(total - part))
    check("transition weights sum to 1", worst_sum < 1e-12, f"{worst_sum:.2e}")
    check("sideband-pair identity", worst_id < 1e-12, f"{worst_id:.2e}")

    emitter = EmitterParams.from_ghz(DEVICE_GAMMA_GHZ)
    drive = DriveConfig.from_ghz(0.0, 3.5299, 1.75, DEVICE_OMEGA_S_GHZ)
    gen = BlochGenerator(drive, emitter)
    fs = floquet_steady_state(gen)
    traj = propagate(gen, BlochState.ground(), 0.0, 40.0 / emitter.gamma.rad,
                     tol=1e-10)
    dev = np.max(np.abs(traj.values[-1] - fs.evaluate(traj.times[-1])))
    check("Floquet limit cycle matches direct integration", dev < 1e-6,
          f"max dev {dev:.2e}")

    eigs = np.linalg.eigvals(monodromy(gen))
    check("monodromy strictly stable", np.max(np.abs(eigs)) < 1.0,
          f"spectral radius {np.max(np.abs(eigs)):.6f}")

    worst_rate = 0.0
    for _ in range(200):
        d = rng.uniform(0.05, 5.0) * rng.choice([-1.0, 1.0])
        cfg = DriveConfig.from_ghz(d, rng.uniform(0.1, 6.0),
                                   rng.uniform(0.05, 3.0), rng.uniform(1.0, 6.0))
        a = cooling_rate_closed_form(cfg, emitter, 0.25).rate
        b = cooling_rate_from_table(cfg, emitter, 0.25).rate
        worst_rate = max(worst_rate,
                         abs(a - b) / max(abs(a), abs(b), 1e-300))
    check("closed-form rate equals table sum", worst_rate < 1e-10,
          f"{worst_rate:.2e}")

    if failures:
        raise ConvergenceError(f"selftest failed: {', '.join(failures)}",
                               residual=float("nan"))
    print("selftest passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sawmollow",
        description=("Resonance fluorescence, dressed-state lines, and "
                     "phonon cooling of an acoustically modulated two-level "
                     "emitter"))
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="one emission spectrum")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--window-ghz", type=float, default=12.0,
                   help="half-width of the frequency window")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--n-phase", type=int, default=16)
    p.add_argument("--nodes", type=int, default=21,
                   help="Gauss-Hermite nodes for the diffusion average")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("spectrum-map", help="spectra over a drive sweep")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--sweep", choices=("rabi-l", "delta"), default="rabi-l")
    p.add_argument("--sweep-start", type=float, default=0.5)
    p.add_argument("--sweep-stop", type=float, default=5.5)
    p.add_argument("--sweep-points", type=int, default=11)
    p.add_argument("--window-ghz", type=float, default=12.0)
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--n-phase", type=int, default=16)
    p.add_argument("--nodes", type=int, default=21)
    p.set_defaults(func=cmd_spectrum_map)

    p = sub.add_parser("dressed-lines", help="predicted line table")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--sweep", choices=("rabi-l", "delta"), default="rabi-l")
    p.add_argument("--sweep-start", type=float, default=0.5)
    p.add_argument("--sweep-stop", type=float, default=5.5)
    p.add_argument("--sweep-points", type=int, default=21)
    p.set_defaults(func=cmd_dressed_lines)

    p = sub.add_parser("cooling-map", help="closed-form phonon rate map")
    _add_common(p)
    _add_physics(p, diffusion_default=DEVICE_DIFFUSION_GHZ * 1e3)
    p.add_argument("--delta-start", type=float, default=-5.0)
    p.add_argument("--delta-stop", type=float, default=5.0)
    p.add_argument("--delta-points", type=int, default=41)
    p.add_argument("--rabi-start", type=float, default=0.5)
    p.add_argument("--rabi-stop", type=float, default=5.5)
    p.add_argument("--rabi-points", type=int, default=41)
    p.add_argument("--nodes", type=int, default=9)
    p.set_defaults(func=cmd_cooling_map)

    p = sub.add_parser("lindblad-map", help="quantized cooling performance map")
    _add_common(p)
    _add_physics(p, diffusion_default=DEVICE_DIFFUSION_GHZ * 1e3)
    p.add_argument("--temp-k", type=float, default=0.1)
    p.add_argument("--g0-mhz", type=float, default=DEVICE_G0_GHZ * 1e3)
    p.add_argument("--q", type=float, default=DEVICE_Q_FACTOR)
    p.add_argument("--m-max", type=int, default=0,
                   help="Fock truncation; 0 derives it from the thermal tail")
    p.add_argument("--adaptive", action="store_true",
                   help="refine the truncation per point")
    p.add_argument("--delta-start", type=float, default=-5.0)
    p.add_argument("--delta-stop", type=float, default=5.0)
    p.add_argument("--delta-points", type=int, default=21)
    p.add_argument("--rabi-start", type=float, default=0.25)
    p.add_argument("--rabi-stop", type=float, default=5.25)
    p.add_argument("--rabi-points", type=int, default=21)
    p.add_argument("--nodes", type=int, default=5)
    p.set_defaults(func=cmd_lindblad_map)

    p = sub.add_parser("fit-absorption", help="fit sideband absorption data")
    _add_common(p)
    p.add_argument("--data", required=True,
                   help="two-column file: detuning_GHz, counts")
    p.add_argument("--omega-s-ghz", type=float, default=DEVICE_OMEGA_S_GHZ)
    p.add_argument("--init-rabi-s-ghz", type=float, default=1.0)
    p.add_argument("--init-linewidth-ghz", type=float, default=0.5)
    p.set_defaults(func=cmd_fit_absorption)

    p = sub.add_parser("fit-lorentzian", help="fit a Lorentzian resonance")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_fit_lorentzian)

    p = sub.add_parser("fit-linear", help="linear calibration slope")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--intercept", action="store_true")
    p.set_defaults(func=cmd_fit_linear)

    p = sub.add_parser("background", help="quadratic background extrapolation")
    _add_common(p)
    p.add_argument("--data", required=True,
                   help="two-column file: bias_V, counts")
    p.add_argument("--target", type=float, required=True)
    p.set_defaults(func=cmd_background)

    p = sub.add_parser("selftest", help="run the quick invariant suite")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def _load_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return values


def _apply_config_file(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    raw = _load_config_file(known.config)
    for action_parser in parser._subparsers._group_actions[0].choices.values():
        defaults = {}
        for action in action_parser._actions:
            if action.dest in raw:
                text = raw[action.dest]
                if action.type is not None:
                    try:
                        defaults[action.dest] = action.type(text)
                    except ValueError as exc:
                        raise ConfigError(
                            f"config value {action.dest} = {text!r}: {exc}")
                elif isinstance(action, argparse._StoreTrueAction):
                    defaults[action.dest] = text.lower() in ("1", "true", "yes")
                else:
                    defaults[action.dest] = text
        if defaults:
            action_parser.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        needs_out = args.func is not cmd_selftest
        if needs_out and not args.out:
            raise ConfigError("--out is required for this command")
        return args.func(args)
    except (ConvergenceError, IntegrationError, DegenerateSystemError,
            UndecayedCorrelatorError, RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
