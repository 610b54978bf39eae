"""Microring pair-source physics: spectra, purity, brightness, noise, fits.

The ring is the all-pass add configuration, field transmission
(tau - alpha e^{i theta}) / (1 - alpha tau e^{i theta}) with self-coupling tau
and round-trip transmission alpha.  The joint spectral density of a pulsed
SFWM pair is the basic-resonator model: the intracavity two-photon pump
envelope (pump spectrum filtered by the pump resonance, self-convolved) times
the signal and idler Lorentzian lineshapes.  Rate, noise and calibration
formulas operate on plain counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

C0 = 299_792_458.0  # vacuum light speed, m/s
PLANCK = 6.626_070_15e-34  # J s

# silicon nonlinear-loss constants
BETA_TPA = 8e-12  # m/W
A_EFF = 500e-9 * 220e-9  # m^2, guided-mode area
SIGMA_FCA = 1.45e-21  # 1/m^2
PHOTON_FREQ = 194e12  # Hz


@dataclass(frozen=True)
class RingParams:
    """Physical microring parameters."""

    tau: float  # self-coupling
    alpha: float  # round-trip transmission
    radius_um: float
    group_index: float
    lambda_res_nm: float

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0 and 0.0 < self.alpha <= 1.0):
            raise ValueError("tau and alpha must lie in (0, 1]")
        if self.radius_um <= 0:
            raise ValueError("radius must be positive")

    @property
    def circumference_m(self) -> float:
        return 2.0 * math.pi * self.radius_um * 1e-6


@dataclass(frozen=True)
class PumpPulse:
    """Pulsed pump settings."""

    center_wavelength_nm: float
    pulse_width_ps: float  # intensity FWHM
    rep_rate_hz: float
    avg_power_mw: float

    def __post_init__(self):
        for name in ("center_wavelength_nm", "pulse_width_ps", "rep_rate_hz", "avg_power_mw"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def sigma_time_s(self) -> float:
        """Gaussian field 1/e half-width from the intensity FWHM."""
        return self.pulse_width_ps * 1e-12 / (2.0 * math.sqrt(math.log(2.0)))


def fsr_ghz(ring: RingParams) -> float:
    """Free spectral range c0 / (n_g 2 pi R)."""
    return C0 / (ring.group_index * ring.circumference_m) / 1e9


def amzi_fsr_ghz(delta_length_um: float, group_index: float) -> float:
    """Free spectral range of an asymmetric MZI with arm imbalance dL."""
    if delta_length_um <= 0 or group_index <= 0:
        raise ValueError("positive inputs required")
    return C0 / (group_index * delta_length_um * 1e-6) / 1e9


def group_index_from_fsr(fsr_test_ghz: float, radius_um: float) -> float:
    """Invert the ring FSR relation for the group index."""
    if fsr_test_ghz <= 0 or radius_um <= 0:
        raise ValueError("positive inputs required")
    return C0 / (fsr_test_ghz * 1e9 * 2.0 * math.pi * radius_um * 1e-6)


def fsr_wavelength_nm(ring: RingParams) -> float:
    lam = ring.lambda_res_nm * 1e-9
    return (lam**2 * fsr_ghz(ring) * 1e9 / C0) * 1e9


def round_trip_phase(ring: RingParams, wavelength_nm: float) -> float:
    """Round-trip phase linearised in detuning from resonance.

    Valid over the few-linewidth windows simulated here; one FSR in
    wavelength sweeps the phase by 2 pi.
    """
    return 2.0 * math.pi * (ring.lambda_res_nm - wavelength_nm) / fsr_wavelength_nm(ring)


def ring_transmission(ring: RingParams, wavelength_nm: float) -> complex:
    """All-pass field transmission at the given wavelength."""
    theta = round_trip_phase(ring, wavelength_nm)
    phase = np.exp(1j * theta)
    return (ring.tau - ring.alpha * phase) / (1.0 - ring.alpha * ring.tau * phase)


def ring_fwhm_pm(ring: RingParams) -> float:
    """Resonance linewidth of the Lorentzian approximation to the dip.

    Delta_lambda = (1 - alpha tau) lambda^2 / (pi n_g L sqrt(alpha tau)).
    """
    at = ring.alpha * ring.tau
    width_theta = 2.0 * (1.0 - at) / math.sqrt(at)
    return width_theta / (2.0 * math.pi) * fsr_wavelength_nm(ring) * 1e3


def linewidth_ghz(ring: RingParams) -> float:
    """Resonance intensity FWHM in frequency units."""
    lam = ring.lambda_res_nm * 1e-9
    return ring_fwhm_pm(ring) * 1e-12 * C0 / lam**2 / 1e9


def q_factor(lambda_res_nm: float, fwhm_pm: float) -> float:
    """Quality factor lambda_res / Delta lambda."""
    if lambda_res_nm <= 0 or fwhm_pm <= 0:
        raise ValueError("positive inputs required")
    return lambda_res_nm * 1e3 / fwhm_pm


def heralding_eff_corrected(ring: RingParams) -> float:
    """Escape-probability heralding efficiency tau / (tau + alpha)."""
    return ring.tau / (ring.tau + ring.alpha)


def field_enhancement_sq(ring: RingParams) -> float:
    """On-resonance intracavity intensity build-up (1 - tau^2) / (1 - alpha tau)^2."""
    return (1.0 - ring.tau**2) / (1.0 - ring.alpha * ring.tau) ** 2


# -- joint spectral density ---------------------------------------------------


@dataclass
class JsdGrid:
    """Joint spectral amplitude on a rectangular detuning grid.

    Normalised so that sum |f|^2 dws dwi = 1 with the axes in angular GHz.
    """

    signal_axis: np.ndarray  # angular detuning, rad/ns (= GHz * 2 pi)
    idler_axis: np.ndarray
    amplitudes: np.ndarray

    def cell_area(self) -> float:
        dws = float(self.signal_axis[1] - self.signal_axis[0])
        dwi = float(self.idler_axis[1] - self.idler_axis[0])
        return dws * dwi

    def normalize(self) -> "JsdGrid":
        weight = math.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.cell_area())
        if weight == 0:
            raise ValueError("degenerate all-zero grid")
        return JsdGrid(self.signal_axis, self.idler_axis, self.amplitudes / weight)


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Non-negative Schmidt coefficients, descending, sum of squares one."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if any(c < -1e-12 for c in coeffs):
            raise ValueError("Schmidt coefficients must be non-negative")
        coeffs = tuple(sorted((max(c, 0.0) for c in coeffs), reverse=True))
        norm = math.sqrt(sum(c * c for c in coeffs))
        if norm == 0:
            raise ValueError("all-zero Schmidt spectrum")
        object.__setattr__(
            self, "coefficients", tuple(c / norm for c in coeffs)
        )


def build_jsd(
    rings: tuple[RingParams, RingParams],
    pump: PumpPulse,
    grid_points: int = 512,
    span_linewidths: float = 5.0,
    pump_ring: RingParams | None = None,
    include_pump_resonance: bool = True,
) -> JsdGrid:
    """Biphoton amplitude of a pulse-pumped ring pair source.

    f(ws, wi) = Phi(ws + wi) L_s(ws) L_i(wi), where L are the signal/idler
    cavity Lorentzians and Phi is the two-photon pump envelope: the Gaussian
    pulse spectrum, filtered by the pump resonance when enabled, convolved
    with itself.  Detunings are measured from the respective resonances.
    """
    ring_s, ring_i = rings
    gamma_s = math.pi * linewidth_ghz(ring_s)  # angular HWHM, rad/ns
    gamma_i = math.pi * linewidth_ghz(ring_i)
    gamma_mean = 0.5 * (gamma_s + gamma_i)
    span = span_linewidths * 2.0 * max(gamma_s, gamma_i)
    ws = np.linspace(-span, span, grid_points)
    wi = np.linspace(-span, span, grid_points)

    sigma_w = 1.0 / (pump.sigma_time_s * 1e9)  # rad/ns, field-amplitude width

    # intracavity pump amplitude on a fine 1d grid, then self-convolution
    pump_pts = 4 * grid_points
    wp = np.linspace(-2 * span, 2 * span, pump_pts)
    envelope = np.exp(-(wp**2) / (2.0 * sigma_w**2))
    if include_pump_resonance:
        ring_p = pump_ring if pump_ring is not None else ring_s
        gamma_p = math.pi * linewidth_ghz(ring_p)
        envelope = envelope * (gamma_p / (gamma_p - 1j * wp))
    two_photon = np.convolve(envelope, envelope) * (wp[1] - wp[0])
    omega_sum = np.linspace(2 * wp[0], 2 * wp[-1], two_photon.size)

    total = ws[:, None] + wi[None, :]
    phi_re = np.interp(total, omega_sum, two_photon.real)
    phi_im = np.interp(total, omega_sum, two_photon.imag)
    lorentz_s = gamma_s / (gamma_s - 1j * ws)
    lorentz_i = gamma_i / (gamma_i - 1j * wi)
    amps = (phi_re + 1j * phi_im) * lorentz_s[:, None] * lorentz_i[None, :]
    del gamma_mean
    return JsdGrid(ws, wi, amps).normalize()


def schmidt_decompose(jsd: JsdGrid, max_modes: int = 64) -> SchmidtSpectrum:
    """Schmidt coefficients of the biphoton amplitude via SVD."""
    if not np.any(jsd.amplitudes):
        raise ValueError("degenerate all-zero grid")
    singulars = np.linalg.svd(jsd.amplitudes, compute_uv=False)
    coeffs = singulars[:max_modes]
    return SchmidtSpectrum(tuple(coeffs))


def purity(spectrum: SchmidtSpectrum) -> float:
    """Heralded-photon spectral purity sum lambda_k^4."""
    return float(sum(c**4 for c in spectrum.coefficients))


def schmidt_number(spectrum: SchmidtSpectrum) -> float:
    return 1.0 / purity(spectrum)


def jsd_purity(jsd: JsdGrid) -> float:
    return purity(schmidt_decompose(jsd))


# -- rates, noise, calibration -------------------------------------------------


@dataclass(frozen=True)
class RateCoefficients:
    """Quadratic-fit coefficients of singles and coincidences vs power."""

    a_s: float
    a_i: float
    a_si: float
    b_s: float = 0.0
    b_i: float = 0.0
    c_s: float = 0.0
    c_i: float = 0.0
    acc: tuple[float, ...] = (0.0,)  # accidental polynomial, low order first

    def __post_init__(self):
        for name in ("a_s", "a_i", "a_si"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def accidentals(self, power_mw: float) -> float:
        return float(sum(c * power_mw**k for k, c in enumerate(self.acc)))


def rates_model(
    gamma_eff: float,
    eta_s: float,
    eta_i: float,
    power_mw: float,
    beta_s: float = 0.0,
    beta_i: float = 0.0,
    dark_s: float = 0.0,
    dark_i: float = 0.0,
    acc: float = 0.0,
) -> tuple[float, float, float]:
    """Singles and coincidence rates of the quadratic SFWM model."""
    p2 = power_mw**2
    c_s = eta_s * gamma_eff * p2 + beta_s * power_mw + dark_s
    c_i = eta_i * gamma_eff * p2 + beta_i * power_mw + dark_i
    cc = eta_s * eta_i * gamma_eff * p2 + acc
    return c_s, c_i, cc


def fit_rates(
    power_mw: np.ndarray,
    singles_s: np.ndarray,
    singles_i: np.ndarray,
    coincidences: np.ndarray,
    accidentals: np.ndarray | None = None,
) -> RateCoefficients:
    """Least-squares quadratic fits of measured count series.

    Needs at least four power points.  Accidentals, when provided, are fitted
    by a quadratic through the origin and subtracted from the coincidences
    before extracting the pure quadratic coefficient.
    """
    power_mw = np.asarray(power_mw, dtype=float)
    if power_mw.size < 4:
        raise ValueError("need at least 4 power points for the quadratic fit")
    design = np.vander(power_mw, 3)  # columns P^2, P, 1
    if np.linalg.matrix_rank(design) < 3:
        raise np.linalg.LinAlgError("singular design matrix")
    coef_s, *_ = np.linalg.lstsq(design, np.asarray(singles_s, float), rcond=None)
    coef_i, *_ = np.linalg.lstsq(design, np.asarray(singles_i, float), rcond=None)

    cc = np.asarray(coincidences, dtype=float)
    acc_poly = (0.0,)
    if accidentals is not None:
        acc_arr = np.asarray(accidentals, dtype=float)
        a2, *_ = np.linalg.lstsq(power_mw[:, None] ** 2, acc_arr, rcond=None)
        acc_poly = (0.0, 0.0, float(a2[0]))
        cc = cc - acc_arr
    a_si, *_ = np.linalg.lstsq(power_mw[:, None] ** 2, cc, rcond=None)

    return RateCoefficients(
        a_s=float(coef_s[0]),
        a_i=float(coef_i[0]),
        a_si=float(a_si[0]),
        b_s=float(coef_s[1]),
        b_i=float(coef_i[1]),
        c_s=float(coef_s[2]),
        c_i=float(coef_i[2]),
        acc=acc_poly,
    )


def extract_efficiencies(a_s: float, a_i: float, a_si: float) -> tuple[float, float, float]:
    """(gamma_eff, eta_s, eta_i) from the quadratic coefficients."""
    if a_si <= 0:
        raise ValueError("a_si must be positive")
    return a_s * a_i / a_si, a_si / a_i, a_si / a_s


def car(cc: float, acc: float) -> float:
    """Coincidence-to-accidental ratio."""
    if acc <= 0:
        raise ZeroDivisionError("accidentals must be positive")
    return cc / acc


def klyshko(cc: float, c_i: float) -> float:
    """Raw heralding efficiency CC / C(idler)."""
    if c_i <= 0:
        raise ZeroDivisionError("idler singles must be positive")
    return cc / c_i


def cc_multipair(x: float, eta_i: float, eta_s: float) -> float:
    """Coincidence probability per pulse with multi-pair emission, threshold detectors."""
    if not 0.0 <= x < 1.0:
        raise ValueError("squeezing parameter must lie in [0, 1)")
    if not (0.0 < eta_i <= 1.0 and 0.0 < eta_s <= 1.0):
        raise ValueError("efficiencies must lie in (0, 1]")
    for pole in (x * (1 - eta_i), x * (1 - eta_s), x * (1 - eta_i) * (1 - eta_s)):
        if abs(pole - 1.0) < 1e-12:
            raise ValueError("parameters sit on a pole of the rate equation")
    num = x * eta_i * eta_s * (x**2 * (1 - eta_i) * (1 - eta_s) - 1.0)
    den = (
        (1.0 - x * (1 - eta_i))
        * (1.0 - x * (1 - eta_s))
        * (x * (1 - eta_i) * (1 - eta_s) - 1.0)
    )
    return num / den


def peak_power_w(pump: PumpPulse) -> float:
    """Average power divided by duty cycle, P / (R tau)."""
    return pump.avg_power_mw * 1e-3 / (pump.rep_rate_hz * pump.pulse_width_ps * 1e-12)


def eta_tpa(pump: PumpPulse, ring: RingParams) -> float:
    """Transmission after two-photon absorption at the intracavity peak power."""
    intensity = field_enhancement_sq(ring) * peak_power_w(pump) / A_EFF
    return 1.0 / (1.0 + BETA_TPA * ring.circumference_m * intensity) ** 2


def free_carrier_density(pump: PumpPulse) -> float:
    """TPA-generated carrier density scale."""
    return BETA_TPA * pump.pulse_width_ps * 1e-12 / (2.0 * PLANCK * PHOTON_FREQ * A_EFF**2)


def eta_fca(pump: PumpPulse, ring: RingParams) -> float:
    """Transmission after free-carrier absorption."""
    n_c0 = free_carrier_density(pump)
    fe2 = field_enhancement_sq(ring)
    term = (
        SIGMA_FCA
        * n_c0
        * ring.circumference_m
        * fe2**2
        * peak_power_w(pump) ** 2
    )
    return 1.0 / math.sqrt(1.0 + term)


def mean_photon_number(gamma_eff: float, power_mw: float, rep_rate_hz: float) -> float:
    """Pairs per pulse gamma_eff P^2 / R."""
    if gamma_eff < 0 or power_mw < 0 or rep_rate_hz <= 0:
        raise ValueError("positive inputs required")
    return gamma_eff * power_mw**2 / rep_rate_hz


def g2_heralded(d123: float, d1: float, d12: float, d13: float) -> float:
    """Heralded second-order correlation D123 D1 / (D12 D13)."""
    if d12 <= 0 or d13 <= 0:
        raise ZeroDivisionError("two-fold rates must be positive")
    return d123 * d1 / (d12 * d13)


def g2_vs_power(power_mw: np.ndarray, a2: float, a3: float = 0.0) -> np.ndarray:
    power_mw = np.asarray(power_mw, dtype=float)
    s = a2 * power_mw**2 + a3 * power_mw**3
    return s / (1.0 + s)


def g2_fit(power_mw: np.ndarray, g2_values: np.ndarray) -> tuple[float, float]:
    """Fit the multi-pair g2 power law; returns (a2, a3)."""
    popt, _ = curve_fit(
        lambda p, a2, a3: g2_vs_power(p, a2, a3),
        np.asarray(power_mw, float),
        np.asarray(g2_values, float),
        p0=(1.0, 0.0),
        maxfev=10_000,
    )
    return float(popt[0]), float(popt[1])


def visibility(cc_max: float, cc_min: float) -> float:
    """Fringe visibility (max - min) / (max + min)."""
    if cc_max < cc_min or cc_min < 0:
        raise ValueError("need cc_max >= cc_min >= 0")
    if cc_max + cc_min == 0:
        raise ZeroDivisionError("fringe is identically zero")
    return (cc_max - cc_min) / (cc_max + cc_min)


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    width: float  # FWHM
    depth: float
    baseline: float
    stderr: tuple[float, float, float, float]

    def value(self, x: np.ndarray) -> np.ndarray:
        half = self.width / 2.0
        return self.baseline - self.depth * half**2 / ((np.asarray(x) - self.center) ** 2 + half**2)


def lorentzian_fit(x: np.ndarray, y: np.ndarray) -> LorentzianFit:
    """Fit a Lorentzian dip; the minimum position is the calibration target.

    Damped least squares via curve_fit (Levenberg-Marquardt for an
    unconstrained problem); initial guesses from the raw minimum and the
    half-depth width.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise ValueError("need at least 5 scan points across the dip")

    def model(xx, center, width, depth, baseline):
        half = width / 2.0
        return baseline - depth * half**2 / ((xx - center) ** 2 + half**2)

    baseline0 = float(np.max(y))
    depth0 = float(baseline0 - np.min(y))
    center0 = float(x[np.argmin(y)])
    half_level = baseline0 - depth0 / 2.0
    below = x[y < half_level]
    width0 = float(below.max() - below.min()) if below.size >= 2 else float(x[1] - x[0]) * 3
    try:
        popt, pcov = curve_fit(
            model,
            x,
            y,
            p0=(center0, width0, depth0, baseline0),
            maxfev=1000 * 4,
            xtol=1e-12,
            ftol=1e-12,
        )
    except RuntimeError as exc:
        raise RuntimeError(f"Lorentzian fit did not converge: {exc}") from exc
    stderr = tuple(float(s) for s in np.sqrt(np.abs(np.diag(pcov))))
    return LorentzianFit(
        center=float(popt[0]),
        width=abs(float(popt[1])),
        depth=float(popt[2]),
        baseline=float(popt[3]),
        stderr=stderr,
    )
