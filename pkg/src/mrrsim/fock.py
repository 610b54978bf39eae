"""Exact few-photon Fock simulation in many optical modes.

States are sparse superpositions of occupation-number kets indexed by
(spatial mode, spectral label) pairs.  Linear optics acts on spatial modes
only and identically on every spectral label, so photons carrying distinct
labels never interfere.  Detection is spectrally blind: patterns constrain
per-mode photon counts summed over labels.

Conventions fixed here (they matter and are asserted throughout the tests):
  * kets are normalised, (a^dag)^n |0> = sqrt(n!) |n>,
  * a transform U substitutes a^dag_j -> sum_k U[k, j] b^dag_k,
  * applying U then V equals applying the single transform V @ U.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

PRUNE_THRESHOLD = 1e-14
UNITARY_TOL = 1e-10

# Occupation entries are (spatial_mode, spectral_label, count) triples,
# sorted, count >= 1, no duplicate (mode, label) keys.
Entry = tuple[int, int, int]


def _canonical(entries: Iterable[Entry]) -> tuple[Entry, ...]:
    merged: dict[tuple[int, int], int] = {}
    for mode, label, count in entries:
        if count < 0:
            raise ValueError("negative occupation count")
        if count == 0:
            continue
        key = (int(mode), int(label))
        merged[key] = merged.get(key, 0) + int(count)
    return tuple(
        (mode, label, count) for (mode, label), count in sorted(merged.items())
    )


@dataclass(frozen=True)
class OccupationState:
    """One bosonic basis ket: photon counts per (spatial mode, spectral label)."""

    occupations: tuple[Entry, ...]

    def __init__(self, occupations: Iterable[Entry]):
        object.__setattr__(self, "occupations", _canonical(occupations))

    @property
    def photon_count(self) -> int:
        return sum(count for _, _, count in self.occupations)

    def mode_counts(self) -> dict[int, int]:
        """Per spatial mode photon count, spectral labels summed out."""
        counts: dict[int, int] = {}
        for mode, _, count in self.occupations:
            counts[mode] = counts.get(mode, 0) + count
        return counts

    def count_in_mode(self, mode: int) -> int:
        return sum(c for m, _, c in self.occupations if m == mode)

    def max_mode(self) -> int:
        return max((m for m, _, _ in self.occupations), default=-1)

    def labels(self) -> set[int]:
        return {label for _, label, _ in self.occupations}


VACUUM = OccupationState(())


def single_photon(mode: int, label: int = 0) -> OccupationState:
    return OccupationState(((mode, label, 1),))


class PureState:
    """Sparse complex superposition over OccupationState kets.

    Instances are treated as immutable; every operation returns a new state.
    The norm may be below one (sub-normalised states appear transiently when
    modelling loss), but never above one beyond roundoff.
    """

    __slots__ = ("terms", "mode_count")

    def __init__(
        self,
        terms: Mapping[OccupationState, complex],
        mode_count: int,
        prune: float = PRUNE_THRESHOLD,
    ):
        kept = {
            ket: complex(amp)
            for ket, amp in terms.items()
            if abs(amp) > prune
        }
        for ket in kept:
            if ket.max_mode() >= mode_count:
                raise ValueError(
                    f"occupied mode {ket.max_mode()} outside register of {mode_count}"
                )
        self.terms: dict[OccupationState, complex] = kept
        self.mode_count = int(mode_count)

    # -- basics ------------------------------------------------------------

    @property
    def is_null(self) -> bool:
        return not self.terms

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.terms.values()))

    def normalize(self) -> "PureState":
        n2 = self.norm_squared()
        if n2 <= 0.0:
            raise ValueError("cannot normalise a null state")
        scale = 1.0 / math.sqrt(n2)
        return PureState(
            {k: a * scale for k, a in self.terms.items()}, self.mode_count, prune=0.0
        )

    def amplitude(self, ket: OccupationState) -> complex:
        return self.terms.get(ket, 0.0 + 0.0j)

    def scaled(self, factor: complex) -> "PureState":
        return PureState(
            {k: a * factor for k, a in self.terms.items()}, self.mode_count, prune=0.0
        )

    def add(self, other: "PureState") -> "PureState":
        if other.mode_count != self.mode_count:
            raise ValueError("mode counts differ")
        out = dict(self.terms)
        for ket, amp in other.terms.items():
            out[ket] = out.get(ket, 0.0 + 0.0j) + amp
        return PureState(out, self.mode_count)

    def occupied_modes(self) -> set[int]:
        modes: set[int] = set()
        for ket in self.terms:
            modes.update(ket.mode_counts())
        return modes

    def photon_numbers(self) -> set[int]:
        return {ket.photon_count for ket in self.terms}

    def __repr__(self) -> str:  # debugging aid only
        parts = ", ".join(
            f"{amp:.4g}*{ket.occupations}" for ket, amp in sorted(
                self.terms.items(), key=lambda kv: kv[0].occupations
            )
        )
        return f"PureState({parts or '0'}, m={self.mode_count})"


def state_from_occupation(
    entries: Iterable[Entry], mode_count: int, amplitude: complex = 1.0
) -> PureState:
    return PureState({OccupationState(entries): amplitude}, mode_count, prune=0.0)


def vacuum_state(mode_count: int) -> PureState:
    return PureState({VACUUM: 1.0 + 0.0j}, mode_count, prune=0.0)


@dataclass(frozen=True)
class LinearTransform:
    """m x m complex matrix acting on spatial-mode creation operators."""

    matrix: np.ndarray
    lossy: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("transform matrix must be square")
        if not np.all(np.isfinite(mat)):
            raise ValueError("non-finite matrix entries")
        object.__setattr__(self, "matrix", mat)
        if self.lossy:
            smax = np.linalg.svd(mat, compute_uv=False)[0]
            if smax > 1.0 + 1e-9:
                raise ValueError("lossy transform must have singular values <= 1")
        else:
            dev = np.max(np.abs(mat @ mat.conj().T - np.eye(mat.shape[0])))
            if dev > UNITARY_TOL:
                raise ValueError(f"matrix is not unitary (deviation {dev:.2e})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> "LinearTransform":
        return LinearTransform(self.matrix.conj().T, lossy=self.lossy)

    def then(self, later: "LinearTransform") -> "LinearTransform":
        """Transform equal to applying self first, then `later`."""
        return LinearTransform(
            later.matrix @ self.matrix, lossy=self.lossy or later.lossy
        )


class Constraint(Enum):
    UNCONSTRAINED = "unconstrained"
    ZERO = "zero"
    AT_LEAST_ONE = "at_least_one"
    EXACTLY = "exactly"


@dataclass(frozen=True)
class DetectionPattern:
    """Per-mode detection constraints, spectrally blind.

    `constraints` maps mode index to Constraint.ZERO / AT_LEAST_ONE, or to an
    integer k for an exact count.  Unlisted modes are unconstrained.  Threshold
    detectors distinguish click from no-click only, so AT_LEAST_ONE / ZERO are
    the physical constraints; exact counts express post-selection rules that
    photon-number accounting enforces (or a number-resolving detector).
    """

    constraints: tuple[tuple[int, Constraint | int], ...]
    detector_model: str = "threshold"

    def __init__(
        self,
        constraints: Mapping[int, Constraint | int],
        detector_model: str = "threshold",
    ):
        if detector_model not in ("threshold", "number_resolving"):
            raise ValueError(f"unknown detector model {detector_model!r}")
        seen: dict[int, Constraint | int] = {}
        for mode, c in constraints.items():
            if mode in seen:
                raise ValueError(f"duplicate constraint for mode {mode}")
            if isinstance(c, int):
                if c < 0:
                    raise ValueError("exact count must be non-negative")
            elif not isinstance(c, Constraint):
                raise ValueError(f"bad constraint {c!r}")
            seen[int(mode)] = c
        object.__setattr__(self, "constraints", tuple(sorted(seen.items())))
        object.__setattr__(self, "detector_model", detector_model)

    def validate_for(self, mode_count: int) -> None:
        for mode, _ in self.constraints:
            if mode >= mode_count:
                raise ValueError(f"pattern constrains mode {mode} >= {mode_count}")

    def matches(self, ket: OccupationState) -> bool:
        counts = ket.mode_counts()
        for mode, c in self.constraints:
            n = counts.get(mode, 0)
            if c is Constraint.UNCONSTRAINED:
                continue
            if c is Constraint.ZERO and n != 0:
                return False
            if c is Constraint.AT_LEAST_ONE and n < 1:
                return False
            if isinstance(c, int) and n != c:
                return False
        return True


def coincidence_pattern(modes: Sequence[int], detector_model: str = "number_resolving") -> DetectionPattern:
    """Exactly one photon in each given mode, other modes unconstrained."""
    return DetectionPattern({m: 1 for m in modes}, detector_model=detector_model)


def click_pattern(
    clicked: Sequence[int], dark: Sequence[int] = ()
) -> DetectionPattern:
    """Threshold pattern: >=1 photon on `clicked` modes, none on `dark` ones."""
    constraints: dict[int, Constraint | int] = {m: Constraint.AT_LEAST_ONE for m in clicked}
    for m in dark:
        constraints[m] = Constraint.ZERO
    return DetectionPattern(constraints, detector_model="threshold")


# -- evolution -------------------------------------------------------------


def _monomial_power(
    base: dict[tuple[int, int], complex], exponent: int
) -> dict[tuple[tuple[int, int], ...], complex]:
    """(sum_k c_k b_k)^exponent as {sorted key tuple with repetition: coeff}."""
    poly: dict[tuple[tuple[int, int], ...], complex] = {(): 1.0 + 0.0j}
    for _ in range(exponent):
        nxt: dict[tuple[tuple[int, int], ...], complex] = {}
        for mono, coeff in poly.items():
            for key, c in base.items():
                new = tuple(sorted(mono + (key,)))
                nxt[new] = nxt.get(new, 0.0 + 0.0j) + coeff * c
        poly = nxt
    return poly


def apply_transform(
    state: PureState, transform: LinearTransform, mode_map: Sequence[int]
) -> PureState:
    """Substitute each creation operator on a mapped mode by its U-weighted sum.

    `mode_map[j]` is the spatial mode fed into input port j of the transform.
    Spectral labels ride along untouched.
    """
    mode_map = [int(m) for m in mode_map]
    if len(mode_map) != transform.dim:
        raise ValueError(
            f"mode_map length {len(mode_map)} != transform dimension {transform.dim}"
        )
    if len(set(mode_map)) != len(mode_map):
        raise ValueError("mode_map entries must be distinct")
    for m in mode_map:
        if m < 0 or m >= state.mode_count:
            raise ValueError(f"mode {m} outside register of {state.mode_count}")

    port_of = {mode: j for j, mode in enumerate(mode_map)}
    matrix = transform.matrix
    out_terms: dict[OccupationState, complex] = {}

    for ket, amp in state.terms.items():
        untouched: list[Entry] = []
        # polynomial over (mode, label) keys for the transformed part
        poly: dict[tuple[tuple[int, int], ...], complex] = {(): 1.0 + 0.0j}
        prefactor = 1.0
        for mode, label, count in ket.occupations:
            if mode not in port_of:
                untouched.append((mode, label, count))
                continue
            j = port_of[mode]
            base = {
                (mode_map[k], label): matrix[k, j]
                for k in range(transform.dim)
                if matrix[k, j] != 0
            }
            factor_poly = _monomial_power(base, count)
            prefactor /= math.sqrt(math.factorial(count))
            merged: dict[tuple[tuple[int, int], ...], complex] = {}
            for mono_a, ca in poly.items():
                for mono_b, cb in factor_poly.items():
                    key = tuple(sorted(mono_a + mono_b))
                    merged[key] = merged.get(key, 0.0 + 0.0j) + ca * cb
            poly = merged

        for mono, coeff in poly.items():
            occ_counts: dict[tuple[int, int], int] = {}
            for key in mono:
                occ_counts[key] = occ_counts.get(key, 0) + 1
            ket_factor = 1.0
            for n in occ_counts.values():
                ket_factor *= math.sqrt(math.factorial(n))
            entries = untouched + [
                (mode, label, n) for (mode, label), n in occ_counts.items()
            ]
            out = OccupationState(entries)
            value = amp * prefactor * coeff * ket_factor
            out_terms[out] = out_terms.get(out, 0.0 + 0.0j) + value

    return PureState(out_terms, state.mode_count)


def tensor(a: PureState, b: PureState) -> PureState:
    """Product state of two states occupying disjoint spatial mode ranges."""
    if a.occupied_modes() & b.occupied_modes():
        raise ValueError("tensor requires disjoint spatial mode ranges")
    mode_count = max(a.mode_count, b.mode_count)
    out: dict[OccupationState, complex] = {}
    for ket_a, amp_a in a.terms.items():
        for ket_b, amp_b in b.terms.items():
            ket = OccupationState(ket_a.occupations + ket_b.occupations)
            out[ket] = out.get(ket, 0.0 + 0.0j) + amp_a * amp_b
    return PureState(out, mode_count)


def post_select(
    state: PureState, pattern: DetectionPattern
) -> tuple[PureState, float]:
    """Condition on a detection pattern.

    Returns the renormalised conditional state and the selection probability
    (sum of |amplitude|^2 over matching terms).  A zero-probability pattern
    returns a null-state sentinel with probability 0.0 rather than raising.
    """
    pattern.validate_for(state.mode_count)
    matching = {k: a for k, a in state.terms.items() if pattern.matches(k)}
    probability = float(sum(abs(a) ** 2 for a in matching.values()))
    if probability <= 0.0:
        return PureState({}, state.mode_count), 0.0
    scale = 1.0 / math.sqrt(probability)
    conditional = PureState(
        {k: a * scale for k, a in matching.items()}, state.mode_count, prune=0.0
    )
    return conditional, probability


def outcome_distribution(
    state, modes: Sequence[int]
) -> dict[tuple[int, ...], float]:
    """Photon-count distribution over the given modes, labels marginalised.

    Only pure states are supported; mixtures must be handled as ensembles at
    a higher level.
    """
    if not isinstance(state, PureState):
        raise TypeError("outcome_distribution expects a PureState")
    dist: dict[tuple[int, ...], float] = {}
    for ket, amp in state.terms.items():
        counts = ket.mode_counts()
        key = tuple(counts.get(m, 0) for m in modes)
        dist[key] = dist.get(key, 0.0) + abs(amp) ** 2
    return dist


# -- dense brute-force oracle ----------------------------------------------

ORACLE_MAX_PHOTONS = 4
ORACLE_MAX_MODES = 12


def _permanent(mat: np.ndarray) -> complex:
    n = mat.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(n)):
        prod = 1.0 + 0.0j
        for i, j in enumerate(perm):
            prod *= mat[i, j]
        total += prod
    return total


def _compositions(total: int, bins: int):
    """All ways to place `total` photons into `bins` modes."""
    if bins == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, bins - 1):
            yield (first,) + rest


def _label_amplitude(
    matrix: np.ndarray, occ_in: Sequence[int], occ_out: Sequence[int]
) -> complex:
    """<out| U |in> for one spectral label via the permanent formula."""
    rows = [m for m, n in enumerate(occ_out) for _ in range(n)]
    cols = [m for m, n in enumerate(occ_in) for _ in range(n)]
    sub = matrix[np.ix_(rows, cols)]
    norm = 1.0
    for n in itertools.chain(occ_in, occ_out):
        norm *= math.factorial(n)
    return _permanent(sub) / math.sqrt(norm)


def brute_force_oracle(
    state: PureState, transform: LinearTransform, pattern: DetectionPattern
) -> float:
    """Detection probability from a dense expansion, independent of apply_transform.

    Output amplitudes are computed per spectral label with the permanent
    formula over all output occupations (no sparsity, no pruning), then the
    pattern probability is summed.  Intended as a cross-check for small
    instances.
    """
    photons = max(state.photon_numbers(), default=0)
    if photons > ORACLE_MAX_PHOTONS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_PHOTONS} photons")
    if state.mode_count > ORACLE_MAX_MODES or transform.dim != state.mode_count:
        raise ValueError(
            "oracle requires the transform to act on the full register "
            f"of at most {ORACLE_MAX_MODES} modes"
        )
    pattern.validate_for(state.mode_count)
    m = state.mode_count

    out_amplitudes: dict[OccupationState, complex] = {}
    for ket, amp in state.terms.items():
        by_label: dict[int, list[int]] = {}
        for mode, label, count in ket.occupations:
            occ = by_label.setdefault(label, [0] * m)
            occ[mode] += count
        label_list = sorted(by_label)
        per_label_outputs = []
        for label in label_list:
            occ_in = by_label[label]
            n = sum(occ_in)
            outputs = []
            for occ_out in _compositions(n, m):
                a = _label_amplitude(transform.matrix, occ_in, occ_out)
                outputs.append((occ_out, a))
            per_label_outputs.append(outputs)
        for combo in itertools.product(*per_label_outputs):
            entries: list[Entry] = []
            a_total = amp
            for label, (occ_out, a) in zip(label_list, combo):
                a_total *= a
                entries.extend(
                    (mode, label, n) for mode, n in enumerate(occ_out) if n > 0
                )
            out = OccupationState(entries)
            out_amplitudes[out] = out_amplitudes.get(out, 0.0 + 0.0j) + a_total

    return float(
        sum(abs(a) ** 2 for k, a in out_amplitudes.items() if pattern.matches(k))
    )


def random_unitary(dim: int, rng: np.random.Generator) -> LinearTransform:
    """Haar-ish unitary from the QR decomposition of a Gaussian matrix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return LinearTransform(q)
