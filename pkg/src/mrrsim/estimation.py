"""Estimation: counts to density matrices, fidelities, witnesses, bounds.

Projectors are built from the same prepare-stage unitaries the simulator
uses, so simulator and estimator share one basis convention.  Counts come in
MeasurementRecord bundles; Poissonian error bars resample them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circuits import ProjectorSetting, prep_unitary

HERMITICITY_TOL = 1e-10
EIGENVALUE_TOL = 1e-9
TRACE_TOL = 1e-9


@dataclass
class DensityMatrix:
    """Validated n-qubit density matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = mat.shape[0]
        if mat.ndim != 2 or mat.shape[1] != dim or dim & (dim - 1):
            raise ValueError("density matrix must be square with 2^n rows")
        if np.max(np.abs(mat - mat.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        eigs = np.linalg.eigvalsh(mat)
        if eigs.min() < -EIGENVALUE_TOL:
            raise ValueError(f"negative eigenvalue {eigs.min():.2e}")
        if abs(mat.trace().real - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {mat.trace().real} != 1")
        self.matrix = mat

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.matrix.shape[0])))


@dataclass(frozen=True)
class MeasurementRecord:
    """Counts of one global measurement setting."""

    setting: tuple[ProjectorSetting, ...]
    counts: dict[str, float]

    def __post_init__(self):
        n = len(self.setting)
        for outcome, value in self.counts.items():
            if len(outcome) != n or set(outcome) - {"0", "1"}:
                raise ValueError(f"bad outcome string {outcome!r}")
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"bad count {value!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.setting)

    def total(self) -> float:
        return float(sum(self.counts.values()))

    def probabilities(self) -> dict[str, float]:
        total = self.total()
        if total <= 0:
            raise ValueError("record has no counts")
        return {o: c / total for o, c in self.counts.items()}

    def probability(self, outcome: str) -> float:
        return self.probabilities().get(outcome, 0.0)


@dataclass(frozen=True)
class EfficiencyRatios:
    """Per-qubit ratio of zero-rail to one-rail detection efficiency."""

    ratios: tuple[float, ...]

    def __post_init__(self):
        if any(r <= 0 for r in self.ratios):
            raise ValueError("efficiency ratios must be positive")


def correct_counts(
    raw: MeasurementRecord, ratios: EfficiencyRatios
) -> dict[str, float]:
    """Loss-balanced relative counts, normalised to the all-zeros outcome.

    corrected_b = prod over qubits with bit 1 of (eta_0 / eta_1) times
    raw_b / raw_0...0; the all-zeros reference must have been observed.
    """
    n = raw.n_qubits
    if len(ratios.ratios) != n:
        raise ValueError("one ratio per qubit required")
    reference = raw.counts.get("0" * n, 0.0)
    if reference <= 0:
        raise ValueError("all-zeros reference count must be positive")
    corrected = {}
    for outcome, count in raw.counts.items():
        factor = 1.0
        for bit, ratio in zip(outcome, ratios.ratios):
            if bit == "1":
                factor *= ratio
        corrected[outcome] = factor * count / reference
    return corrected


def distort_counts(
    true_counts: dict[str, float], ratios: EfficiencyRatios
) -> dict[str, float]:
    """Forward model of unequal rail efficiencies (inverse of correct_counts)."""
    distorted = {}
    for outcome, count in true_counts.items():
        factor = 1.0
        for bit, ratio in zip(outcome, ratios.ratios):
            if bit == "1":
                factor /= ratio
        distorted[outcome] = factor * count
    return distorted


# -- projectors and Born probabilities ----------------------------------------


def analysis_ket(setting: ProjectorSetting, bit: int) -> np.ndarray:
    """Single-qubit state detected as `bit` under the given setting."""
    return prep_unitary(setting.theta, setting.phi).matrix[:, bit]


def outcome_projector(setting: Sequence[ProjectorSetting], outcome: str) -> np.ndarray:
    ket = np.array([1.0 + 0.0j])
    for s, bit in zip(setting, outcome):
        ket = np.kron(ket, analysis_ket(s, int(bit)))
    return np.outer(ket, ket.conj())


def born_probabilities(
    rho: np.ndarray, setting: Sequence[ProjectorSetting]
) -> dict[str, float]:
    """Outcome distribution Tr(rho Pi_outcome) of one product setting."""
    rho = np.asarray(rho, dtype=complex)
    n = len(setting)
    if rho.shape != (2**n, 2**n):
        raise ValueError("dimension mismatch between rho and setting")
    probs = {}
    for idx in range(2**n):
        outcome = format(idx, f"0{n}b")
        pi = outcome_projector(setting, outcome)
        probs[outcome] = float(np.real(np.trace(rho @ pi)))
    return probs


def pauli_settings(n: int) -> list[tuple[ProjectorSetting, ...]]:
    """The 3^n product Pauli settings, the default tomography set."""
    import itertools

    axes = [
        ProjectorSetting.sigma_x(),
        ProjectorSetting.sigma_y(),
        ProjectorSetting.sigma_z(),
    ]
    return [tuple(combo) for combo in itertools.product(axes, repeat=n)]


# -- maximum-likelihood tomography ---------------------------------------------


@dataclass
class MleResult:
    rho: DensityMatrix
    log_likelihoods: list[float]
    iterations: int
    converged: bool
    rank_deficient: bool


def _log_likelihood(counts, probs) -> float:
    ll = 0.0
    for c, p in zip(counts, probs):
        if c > 0:
            ll += c * math.log(max(p, 1e-300))
    return ll


def mle_tomography(
    records: Sequence[MeasurementRecord],
    n_qubits: int,
    tol: float = 1e-10,
    max_iterations: int = 5000,
    dilution: float = 0.1,
) -> MleResult:
    """Iterative R-rho-R maximum-likelihood reconstruction.

    The fixed-point update rho -> R rho R / tr is diluted by `dilution`
    whenever it would decrease the log-likelihood, which keeps the likelihood
    non-decreasing.  A rank-deficient (informationally incomplete) setting
    collection is flagged and the best feasible estimate returned with a
    warning.
    """
    dim = 2**n_qubits
    projectors: list[np.ndarray] = []
    counts: list[float] = []
    for record in records:
        if record.n_qubits != n_qubits:
            raise ValueError("record qubit count mismatch")
        for idx in range(dim):
            outcome = format(idx, f"0{n_qubits}b")
            projectors.append(outcome_projector(record.setting, outcome))
            counts.append(record.counts.get(outcome, 0.0))
    total = sum(counts)
    if total <= 0:
        raise ValueError("no counts provided")
    freqs = np.array(counts) / total

    basis = np.stack([p.reshape(-1) for p in projectors])
    rank = np.linalg.matrix_rank(basis, tol=1e-9)
    rank_deficient = rank < dim * dim
    if rank_deficient:
        warnings.warn(
            "measurement settings are informationally incomplete; "
            "returning the best feasible estimate",
            RuntimeWarning,
        )

    n_settings = len(records)
    rho = np.eye(dim, dtype=complex) / dim
    lls: list[float] = []
    converged = False
    identity = np.eye(dim, dtype=complex)

    def probabilities(r):
        return np.array(
            [max(np.real(np.trace(r @ p)), 0.0) for p in projectors]
        ) / n_settings

    probs = probabilities(rho)
    ll = _log_likelihood(freqs, probs)
    lls.append(ll)
    for iteration in range(1, max_iterations + 1):
        r_op = np.zeros((dim, dim), dtype=complex)
        for f, p, pi in zip(freqs, probs, projectors):
            if f > 0:
                r_op += (f / max(p, 1e-300)) * pi / n_settings
        candidate = r_op @ rho @ r_op
        candidate /= np.trace(candidate).real
        cand_probs = probabilities(candidate)
        cand_ll = _log_likelihood(freqs, cand_probs)
        if cand_ll < ll:
            mixed = (1.0 - dilution) * identity + dilution * r_op
            candidate = mixed @ rho @ mixed
            candidate /= np.trace(candidate).real
            cand_probs = probabilities(candidate)
            cand_ll = _log_likelihood(freqs, cand_probs)
            if cand_ll < ll:
                converged = True
                break
        improvement = abs(cand_ll - ll)
        rho, probs, ll = candidate, cand_probs, cand_ll
        lls.append(ll)
        if improvement < tol * max(abs(ll), 1.0):
            converged = True
            break

    rho = 0.5 * (rho + rho.conj().T)
    eigs, vecs = np.linalg.eigh(rho)
    eigs = np.clip(eigs, 0.0, None)
    rho = (vecs * eigs) @ vecs.conj().T
    rho /= np.trace(rho).real
    return MleResult(
        rho=DensityMatrix(rho),
        log_likelihoods=lls,
        iterations=len(lls) - 1,
        converged=converged,
        rank_deficient=rank_deficient,
    )


def fidelity(rho: np.ndarray | DensityMatrix, target: np.ndarray) -> float:
    """Overlap <psi|rho|psi> with a pure target state."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, complex)
    target = np.asarray(target, dtype=complex)
    if mat.shape[0] != target.size:
        raise ValueError("dimension mismatch")
    target = target / np.linalg.norm(target)
    return float(np.real(target.conj() @ mat @ target))


# -- GHZ witness and two-basis bounds ------------------------------------------


def _is_z_setting(setting: tuple[ProjectorSetting, ...]) -> bool:
    return all(abs(s.theta - math.pi) < 1e-9 and abs(s.phi) < 1e-9 for s in setting)


def _omega_angle(setting: tuple[ProjectorSetting, ...]) -> float:
    angles = {round(s.phi, 12) for s in setting}
    thetas = {round(s.theta, 12) for s in setting}
    if thetas != {round(math.pi / 2, 12)} or len(angles) != 1:
        raise ValueError("expected a uniform equatorial setting")
    return next(iter(angles))


def parity_expectation(record: MeasurementRecord) -> float:
    """Sum of (-1)^(number of ones) over outcome probabilities."""
    return float(
        sum((-1) ** outcome.count("1") * p for outcome, p in record.probabilities().items())
    )


def ghz_fidelity_witness(records: Sequence[MeasurementRecord]) -> tuple[float, float]:
    """GHZ fidelity and witness value from n + 1 global settings.

    Expects one computational-basis record plus n equatorial records at
    angles k pi / n.  F = (population + coherence) / 2 with the coherence the
    parity-signed average of the equatorial parities; <W> = 1/2 - F, negative
    iff genuine multipartite entanglement is certified.
    """
    z_records = [r for r in records if _is_z_setting(r.setting)]
    omega_records = [r for r in records if not _is_z_setting(r.setting)]
    if len(z_records) != 1:
        raise ValueError("exactly one computational-basis record required")
    n = z_records[0].n_qubits
    if len(omega_records) != n:
        raise ValueError(f"expected {n} equatorial records, got {len(omega_records)}")

    keyed = sorted(omega_records, key=_omega_angle)
    for k, record in enumerate(keyed):
        expected = k * math.pi / n
        if abs(_omega_angle(record) - expected) > 1e-9:
            raise ValueError("equatorial angles must be k pi / n")

    probs = z_records[0].probabilities()
    population = probs.get("0" * n, 0.0) + probs.get("1" * n, 0.0)
    coherence = (
        sum((-1) ** k * parity_expectation(r) for k, r in enumerate(keyed)) / n
    )
    f = (population + coherence) / 2.0
    return f, 0.5 - f


def _antipodal_pairs(n: int) -> list[tuple[str, str]]:
    pairs = []
    for idx in range(1, 2 ** (n - 1)):
        bits = format(idx, f"0{n}b")
        flipped = "".join("1" if b == "0" else "0" for b in bits)
        pairs.append((bits, flipped))
    return pairs


def _cross_terms(z_record: MeasurementRecord) -> float:
    probs = z_record.probabilities()
    return float(
        sum(
            math.sqrt(probs.get(a, 0.0) * probs.get(b, 0.0))
            for a, b in _antipodal_pairs(z_record.n_qubits)
        )
    )


def gme_concurrence_bound(
    n: int, z_record: MeasurementRecord, x_record: MeasurementRecord
) -> float:
    """Lower bound on the GME-concurrence from two global product bases.

    The x-basis parity expectation minus four times the sum of square-rooted
    antipodal population products in the computational basis; 3- and 4-qubit
    GHZ states reach the bound exactly.
    """
    if n not in (3, 4):
        raise ValueError("bound implemented for 3 and 4 qubits")
    if z_record.n_qubits != n or x_record.n_qubits != n:
        raise ValueError("record size mismatch")
    return parity_expectation(x_record) - 4.0 * _cross_terms(z_record)


def fidelity_lower_bound_two_basis(
    n: int, z_record: MeasurementRecord, x_record: MeasurementRecord
) -> float:
    """Lower bound on the GHZ fidelity from the same two settings."""
    if n not in (3, 4):
        raise ValueError("bound implemented for 3 and 4 qubits")
    if z_record.n_qubits != n or x_record.n_qubits != n:
        raise ValueError("record size mismatch")
    probs = z_record.probabilities()
    population = probs.get("0" * n, 0.0) + probs.get("1" * n, 0.0)
    return (
        0.5 * parity_expectation(x_record)
        - _cross_terms(z_record)
        + 0.5 * population
    )


# -- Poissonian error bars ------------------------------------------------------


def poisson_error(
    statistic: Callable[[Sequence[MeasurementRecord]], float],
    records: Sequence[MeasurementRecord],
    trials: int = 200,
    seed: int = 0,
) -> float:
    """Monte-Carlo standard deviation under Poissonian counting statistics.

    Every count is resampled as Poisson(count), the statistic recomputed, and
    the sample standard deviation over `trials` repetitions returned.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a stable error bar")
    rng = np.random.default_rng(seed)
    values = np.empty(trials)
    for t in range(trials):
        resampled = []
        for record in records:
            counts = {
                outcome: float(rng.poisson(c)) for outcome, c in record.counts.items()
            }
            resampled.append(MeasurementRecord(record.setting, counts))
        values[t] = statistic(resampled)
    return float(np.std(values, ddof=1))
