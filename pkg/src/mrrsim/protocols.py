"""Protocol compositions: Bell generation, teleportation, swapping, GHZ, fringes.

Sources are modelled as truncated two-mode squeezers feeding fixed rails of
the dual-rail register: ring r emits (signal, idler) pairs whose spectral
content is a Schmidt-mode ladder.  The nominal (noise-free) path keeps exactly
one pair per required source; multi-pair noise adds the higher expansion
orders weighted by the mean pair number per pulse.  Detection is threshold
(click / no-click) throughout, which is what makes multi-pair terms leak into
coincidence patterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import (
    DEFAULT_LAYOUT,
    ProjectorSetting,
    QubitLayout,
    embed,
    measure_stage,
    mzi_unitary,
    o_bell_unitary,
    o_fusion_unitary,
    prep_unitary,
)
from .fock import (
    Constraint,
    DetectionPattern,
    LinearTransform,
    OccupationState,
    PureState,
    apply_transform,
    post_select,
    vacuum_state,
)

SINGLE_QUBIT_STATES: dict[str, tuple[complex, complex]] = {
    "0": (1.0, 0.0),
    "1": (0.0, 1.0),
    "+": (1 / math.sqrt(2), 1 / math.sqrt(2)),
    "-": (1 / math.sqrt(2), -1 / math.sqrt(2)),
    "+i": (1 / math.sqrt(2), 1j / math.sqrt(2)),
    "-i": (1 / math.sqrt(2), -1j / math.sqrt(2)),
}

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Spectral label used by all sources for the common (interfering) Schmidt modes.
_MATCHED_BASE = 0
# Labels >= _PRIVATE_BASE are per-source, mutually orthogonal.
_PRIVATE_BASE = 1000


def two_mode_schmidt(purity: float) -> tuple[float, float]:
    """Two-mode Schmidt amplitudes whose sum of fourth powers equals `purity`."""
    if not 0.5 <= purity <= 1.0:
        raise ValueError("a two-mode spectrum only reaches purities in [0.5, 1]")
    p = 0.5 * (1.0 + math.sqrt(2.0 * purity - 1.0))
    return (math.sqrt(p), math.sqrt(1.0 - p))


@dataclass(frozen=True)
class PairSource:
    """One ring: where its signal and idler photons land."""

    name: str
    signal_mode: int
    idler_mode: int
    weight: complex = 1.0


@dataclass(frozen=True)
class NoiseKnobs:
    """Noise configuration shared by the protocol runners.

    nbar: mean photon pairs per pulse and source; 0 selects the nominal path.
    schmidt: Schmidt-mode amplitude ladder shared by all sources.
    distinguishability: weight of the source-private spectral component,
        0 keeps sources identical, 1 makes them pairwise orthogonal.
    interconnect_loss_db: loss of the chip-to-chip link on qubit 4.
    interconnect_rotation: polarisation rotation of the link, compensated
        by its inverse on arrival, per the fibre-controller procedure.
    """

    nbar: float = 0.0
    schmidt: tuple[float, ...] = (1.0,)
    distinguishability: float = 0.0
    interconnect_loss_db: float = 0.0
    interconnect_rotation: float = 0.0

    def __post_init__(self):
        if self.nbar < 0 or self.nbar >= 0.5:
            raise ValueError("nbar must lie in [0, 0.5)")
        if not 0.0 <= self.distinguishability <= 1.0:
            raise ValueError("distinguishability must lie in [0, 1]")
        norm = sum(abs(c) ** 2 for c in self.schmidt)
        if abs(norm - 1.0) > 1e-9:
            object.__setattr__(
                self,
                "schmidt",
                tuple(c / math.sqrt(norm) for c in self.schmidt),
            )

    @property
    def ideal(self) -> bool:
        return (
            self.nbar == 0.0
            and self.distinguishability == 0.0
            and self.interconnect_loss_db == 0.0
        )


IDEAL = NoiseKnobs()


@dataclass
class ExperimentSpec:
    """Declarative description of one programmable-chip run."""

    name: str
    active_sources: tuple[int, ...]
    pump_weights: tuple[complex, ...] = ()
    operator: str = "off"
    prep: dict[int, tuple[float, float]] = field(default_factory=dict)
    noise: NoiseKnobs = IDEAL
    shots: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.operator not in ("off", "bell", "fusion"):
            raise ValueError(f"unknown operator {self.operator!r}")
        if not self.pump_weights:
            self.pump_weights = tuple(
                1.0 / math.sqrt(len(self.active_sources))
                for _ in self.active_sources
            )
        if len(self.pump_weights) != len(self.active_sources):
            raise ValueError("one pump weight per active source")
        norm = math.sqrt(sum(abs(w) ** 2 for w in self.pump_weights))
        self.pump_weights = tuple(w / norm for w in self.pump_weights)


@dataclass
class CoincidenceTally:
    """Outcome probabilities (and optionally sampled counts) for one setting.

    Probabilities are joint with post-selection, so they sum to the selection
    probability rather than to one.
    """

    setting_id: str
    settings: tuple[ProjectorSetting, ...]
    probabilities: dict[str, float]
    counts: dict[str, int] | None = None

    @property
    def selection_probability(self) -> float:
        return float(sum(self.probabilities.values()))


# -- source emission ---------------------------------------------------------


def default_sources(layout: QubitLayout = DEFAULT_LAYOUT) -> dict[int, PairSource]:
    """Ring-to-rail wiring of the four-qubit register.

    Rings 1, 2 feed the zero/one rails of qubit pair (1, 2); rings 3, 4 feed
    qubit pair (3, 4).  Signals go to the inner qubits 2, 3 (they meet the
    entangling operator), idlers to the outer qubits 1, 4.
    """
    return {
        1: PairSource("ring1", layout.zero_rail(2), layout.zero_rail(1)),
        2: PairSource("ring2", layout.one_rail(2), layout.one_rail(1)),
        3: PairSource("ring3", layout.zero_rail(3), layout.zero_rail(4)),
        4: PairSource("ring4", layout.one_rail(3), layout.one_rail(4)),
    }


def _create_photon(state: PureState, mode: int, label: int) -> PureState:
    out: dict[OccupationState, complex] = {}
    for ket, amp in state.terms.items():
        n = 0
        for m, l, c in ket.occupations:
            if m == mode and l == label:
                n = c
                break
        new = OccupationState(ket.occupations + ((mode, label, 1),))
        out[new] = out.get(new, 0.0 + 0.0j) + amp * math.sqrt(n + 1)
    return PureState(out, state.mode_count, prune=0.0)


def _spectral_components(
    ring_id: int, knobs: NoiseKnobs
) -> list[tuple[int, complex]]:
    """(label, amplitude) pairs of one ring's pair operator."""
    comps: list[tuple[int, complex]] = []
    shared = math.sqrt(1.0 - knobs.distinguishability)
    private = math.sqrt(knobs.distinguishability)
    for k, lam in enumerate(knobs.schmidt):
        if shared:
            comps.append((_MATCHED_BASE + k, lam * shared))
        if private:
            comps.append((_PRIVATE_BASE + 10 * ring_id + k, lam * private))
    return comps


def _apply_pair(
    state: PureState, source: PairSource, components
) -> PureState:
    total = PureState({}, state.mode_count)
    for label, lam in components:
        created = _create_photon(
            _create_photon(state, source.signal_mode, label),
            source.idler_mode,
            label,
        )
        total = total.add(created.scaled(lam))
    return total


def emitted_state(
    sources: dict[int, PairSource],
    groups: list[dict[int, complex]],
    knobs: NoiseKnobs,
    mode_count: int,
) -> PureState:
    """Truncated squeezed emission of the pumped ring array.

    Each group is a set of coherently pumped rings (weights normalised within
    the group) that nominally contributes exactly one photon pair.  With
    nbar = 0 the returned state is that nominal manifold.  With nbar > 0 the
    full expansion is kept up to two pairs per source and len(groups) + 2
    pairs overall, weighted by sqrt(nbar) per pair.
    """
    normed_groups: list[dict[int, complex]] = []
    for group in groups:
        norm = math.sqrt(sum(abs(w) ** 2 for w in group.values()))
        if norm == 0.0:
            raise ValueError("group with zero pump weight")
        normed_groups.append({r: w / norm for r, w in group.items()})

    noisy = knobs.nbar > 0.0
    if not noisy:
        state = vacuum_state(mode_count)
        for group in normed_groups:
            summed = PureState({}, mode_count)
            for ring_id, weight in sorted(group.items()):
                comps = _spectral_components(ring_id, knobs)
                summed = summed.add(
                    _apply_pair(state, sources[ring_id], comps).scaled(weight)
                )
            state = summed
        if state.is_null:
            raise ValueError("no emission terms; check active sources")
        return state.normalize()

    nominal_pairs = len(normed_groups)
    per_source_cap = 2
    total_cap = nominal_pairs + 2
    weights = {r: w for group in normed_groups for r, w in group.items()}

    by_pairs: dict[int, PureState] = {0: vacuum_state(mode_count)}
    for ring_id, weight in sorted(weights.items()):
        src = sources[ring_id]
        comps = _spectral_components(ring_id, knobs)
        x = weight * math.sqrt(knobs.nbar)
        nxt: dict[int, PureState] = {}
        for have, st in by_pairs.items():
            term = st
            for j in range(per_source_cap + 1):
                if have + j > total_cap:
                    break
                if j > 0:
                    term = _apply_pair(term, src, comps)
                contrib = term.scaled(x**j / math.factorial(j))
                if have + j in nxt:
                    nxt[have + j] = nxt[have + j].add(contrib)
                else:
                    nxt[have + j] = contrib
        by_pairs = nxt

    total = PureState({}, mode_count)
    for st in by_pairs.values():
        total = total.add(st)
    if total.is_null:
        raise ValueError("no emission terms; check active sources")
    return total.normalize()


# -- detection and reduction --------------------------------------------------


def qubit_click_pattern(
    outcome: dict[int, int], dark_qubits=(), layout: QubitLayout = DEFAULT_LAYOUT
) -> DetectionPattern:
    """Threshold pattern for one logical outcome.

    outcome maps qubit -> bit; the bit's rail must click and the partner rail
    stay dark.  Qubits in dark_qubits must show no photons at all.
    """
    constraints: dict[int, Constraint | int] = {}
    for qubit, bit in outcome.items():
        z, o = layout.qubit_rails(qubit)
        hit, miss = (o, z) if bit else (z, o)
        constraints[hit] = Constraint.AT_LEAST_ONE
        constraints[miss] = Constraint.ZERO
    for qubit in dark_qubits:
        z, o = layout.qubit_rails(qubit)
        constraints[z] = Constraint.ZERO
        constraints[o] = Constraint.ZERO
    return DetectionPattern(constraints)


def measure_probabilities(
    state: PureState,
    settings: dict[int, ProjectorSetting],
    layout: QubitLayout = DEFAULT_LAYOUT,
    extra: dict[int, Constraint | int] | None = None,
) -> dict[str, float]:
    """Joint click-outcome distribution over the measured qubits.

    Applies the projective stages, then evaluates every one-click-per-qubit
    pattern.  Probabilities sum to the post-selection success probability.
    """
    qubits = sorted(settings)
    rotated = state
    for k in qubits:
        s = settings[k]
        block = prep_unitary(s.theta, s.phi).adjoint()
        rotated = apply_transform(rotated, block, list(layout.qubit_rails(k)))

    probs: dict[str, float] = {}
    for bits in range(2 ** len(qubits)):
        outcome = {
            q: (bits >> (len(qubits) - 1 - i)) & 1 for i, q in enumerate(qubits)
        }
        pattern = qubit_click_pattern(outcome, layout=layout)
        if extra:
            merged = dict(pattern.constraints)
            merged.update(extra)
            pattern = DetectionPattern(merged)
        key = "".join(str(outcome[q]) for q in qubits)
        probs[key] = post_select(rotated, pattern)[1]
    return probs


def reduced_qubit_density(
    state: PureState,
    qubits,
    layout: QubitLayout = DEFAULT_LAYOUT,
    extra_pattern: DetectionPattern | None = None,
) -> tuple[np.ndarray, float]:
    """Density matrix over the chosen qubits after threshold post-selection.

    Keeps terms where each chosen qubit has all its photons on a single rail
    (one click) and any extra pattern is satisfied; traces over spectral
    labels, rail multiplicities and unconstrained modes.  Returns (rho,
    selection probability).
    """
    qubits = list(qubits)
    n = len(qubits)
    dim = 2**n
    rails = {q: layout.qubit_rails(q) for q in qubits}
    groups: dict[tuple, np.ndarray] = {}

    for ket, amp in state.terms.items():
        if extra_pattern is not None and not extra_pattern.matches(ket):
            continue
        counts = ket.mode_counts()
        bits = []
        ok = True
        for q in qubits:
            z, o = rails[q]
            nz, no = counts.get(z, 0), counts.get(o, 0)
            if nz > 0 and no == 0:
                bits.append(0)
            elif no > 0 and nz == 0:
                bits.append(1)
            else:
                ok = False
                break
        if not ok:
            continue
        index = int("".join(map(str, bits)), 2) if bits else 0
        logical_modes = {m for q in qubits for m in rails[q]}
        env = tuple(
            (m, l, c) for m, l, c in ket.occupations if m not in logical_modes
        )
        label_sig = tuple(
            sorted((m, l, c) for m, l, c in ket.occupations if m in logical_modes)
        )
        # the environment key keeps rail labels/multiplicities but not which
        # rail carried them (that is the logical index)
        rail_content = []
        for q, bit in zip(qubits, bits):
            rail = rails[q][bit]
            rail_content.append(
                tuple(sorted((l, c) for m, l, c in label_sig if m == rail))
            )
        key = (env, tuple(rail_content))
        vec = groups.setdefault(key, np.zeros(dim, dtype=complex))
        vec[index] += amp

    rho = np.zeros((dim, dim), dtype=complex)
    for vec in groups.values():
        rho += np.outer(vec, vec.conj())
    probability = float(rho.trace().real)
    if probability <= 0.0:
        return np.zeros((dim, dim), dtype=complex), 0.0
    return rho / probability, probability


def apply_local_qubit_unitary(
    state: PureState, qubit: int, u2: np.ndarray, layout: QubitLayout = DEFAULT_LAYOUT
) -> PureState:
    return apply_transform(
        state, LinearTransform(np.asarray(u2, dtype=complex)), list(layout.qubit_rails(qubit))
    )


def state_prep_rotation(alpha: complex, beta: complex) -> np.ndarray:
    """Unitary taking logical |0> to alpha|0> + beta|1>."""
    norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    a, b = alpha / norm, beta / norm
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]], dtype=complex)


def apply_interconnect(
    state: PureState,
    qubit: int,
    loss_db: float,
    rotation: float,
    layout: QubitLayout = DEFAULT_LAYOUT,
) -> PureState:
    """Chip-to-chip link on one qubit: rotation, loss, compensating rotation.

    Loss is modelled exactly by coupling each rail to a fresh environment
    mode, so the returned state lives on an enlarged register.
    """
    z, o = layout.qubit_rails(qubit)
    eta = 10.0 ** (-loss_db / 10.0)
    t, r = math.sqrt(eta), math.sqrt(1.0 - eta)
    rot = np.array(
        [[math.cos(rotation), -math.sin(rotation)],
         [math.sin(rotation), math.cos(rotation)]],
        dtype=complex,
    )
    env_z, env_o = state.mode_count, state.mode_count + 1
    widened = PureState(state.terms, state.mode_count + 2, prune=0.0)
    widened = apply_transform(widened, LinearTransform(rot), [z, o])
    tap = LinearTransform(np.array([[t, r], [r, -t]], dtype=complex))
    widened = apply_transform(widened, tap, [z, env_z])
    widened = apply_transform(widened, tap, [o, env_o])
    widened = apply_transform(widened, LinearTransform(rot.conj().T), [z, o])
    return widened


# -- protocol runners ---------------------------------------------------------


def _operator_transform(name: str, layout: QubitLayout) -> LinearTransform | None:
    if name == "off":
        return None
    rails = list(layout.qubit_rails(2)) + list(layout.qubit_rails(3))
    block = o_bell_unitary() if name == "bell" else o_fusion_unitary()
    return embed(block, rails, layout.mode_count)


def prepare_bell(
    pair: tuple[int, int] = (3, 4),
    relative_phase: float = 0.0,
    noise: NoiseKnobs = IDEAL,
    layout: QubitLayout = DEFAULT_LAYOUT,
) -> PureState:
    """Post-selected Bell state of one qubit pair from two coherently pumped rings.

    `pair` names the two rings; their joint emission carries (|00> +
    e^{i phi}|11>)/sqrt(2) onto the qubit pair they feed.  Local rotations of
    the returned state reach the other three Bell states.
    """
    ring_a, ring_b = pair
    if ring_a == ring_b:
        raise ValueError("a Bell pair needs two distinct sources")
    sources = default_sources(layout)
    groups = [{ring_a: 1.0, ring_b: np.exp(1j * relative_phase)}]
    state = emitted_state(sources, groups, noise, layout.mode_count)
    qubits = (1, 2) if {ring_a, ring_b} <= {1, 2} else (3, 4)
    other = tuple(q for q in range(1, 5) if q not in qubits)
    keep: dict[OccupationState, complex] = {}
    for bits in ((0, 0), (0, 1), (1, 0), (1, 1)):
        pat = qubit_click_pattern(
            {qubits[0]: bits[0], qubits[1]: bits[1]}, dark_qubits=other, layout=layout
        )
        for ket, amp in state.terms.items():
            if pat.matches(ket):
                keep[ket] = amp
    selected = PureState(keep, layout.mode_count, prune=0.0)
    if selected.is_null:
        return selected
    return selected.normalize()


def bell_state_vector(kind: str) -> np.ndarray:
    s = 1 / math.sqrt(2)
    vecs = {
        "phi+": np.array([s, 0, 0, s]),
        "phi-": np.array([s, 0, 0, -s]),
        "psi+": np.array([0, s, s, 0]),
        "psi-": np.array([0, s, -s, 0]),
    }
    return vecs[kind].astype(complex)


def ghz_state_vector(n: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / math.sqrt(2)
    return v


@dataclass
class ProtocolResult:
    rho: np.ndarray
    success_probability: float
    qubits: tuple[int, ...]
    target: np.ndarray

    @property
    def fidelity(self) -> float:
        return float(np.real(self.target.conj() @ self.rho @ self.target))


def run_teleportation(
    psi: str | tuple[complex, complex],
    projection: str = "psi+",
    noise: NoiseKnobs = IDEAL,
    chip_to_chip: bool = False,
    layout: QubitLayout = DEFAULT_LAYOUT,
) -> ProtocolResult:
    """Teleport a single-qubit state from qubit 2 to qubit 4.

    Ring 1 supplies the trigger/input pair, rings 3 and 4 the shared Bell
    pair.  The analyser accepts one odd-parity branch: `psi+` is the
    both-rails-of-qubit-2 click pattern (output corrected by sigma_x),
    `psi-` the opposite-qubit opposite-rail pattern (corrected by sigma_y).
    """
    if projection not in ("psi+", "psi-"):
        raise ValueError("projection must be 'psi+' or 'psi-'")
    alpha, beta = SINGLE_QUBIT_STATES[psi] if isinstance(psi, str) else psi
    sources = default_sources(layout)
    groups = [{1: 1.0}, {3: 1.0, 4: 1.0}]
    state = emitted_state(sources, groups, noise, layout.mode_count)
    state = apply_local_qubit_unitary(state, 2, state_prep_rotation(alpha, beta), layout)
    if chip_to_chip or noise.interconnect_loss_db or noise.interconnect_rotation:
        state = apply_interconnect(
            state, 4, noise.interconnect_loss_db, noise.interconnect_rotation, layout
        )
    op = _operator_transform("bell", layout)
    state = apply_transform(state, op, list(range(layout.mode_count)))

    z1, o1 = layout.qubit_rails(1)
    z2, o2 = layout.qubit_rails(2)
    z3, o3 = layout.qubit_rails(3)
    if projection == "psi+":
        analyser = {
            z2: Constraint.AT_LEAST_ONE,
            o2: Constraint.AT_LEAST_ONE,
            z3: Constraint.ZERO,
            o3: Constraint.ZERO,
        }
        correction = PAULI["x"]
    else:
        analyser = {
            o2: Constraint.AT_LEAST_ONE,
            z3: Constraint.AT_LEAST_ONE,
            z2: Constraint.ZERO,
            o3: Constraint.ZERO,
        }
        correction = PAULI["y"]
    analyser[z1] = Constraint.AT_LEAST_ONE
    analyser[o1] = Constraint.ZERO
    pattern = DetectionPattern(analyser)
    rho, prob = reduced_qubit_density(state, [4], layout, extra_pattern=pattern)
    rho = correction @ rho @ correction.conj().T
    target = np.array([alpha, beta], dtype=complex)
    target = target / np.linalg.norm(target)
    return ProtocolResult(rho, prob, (4,), target)


def run_swapping(
    mode: str = "bell",
    noise: NoiseKnobs = IDEAL,
    layout: QubitLayout = DEFAULT_LAYOUT,
) -> ProtocolResult:
    """Entanglement swapping of two Bell pairs onto qubits (1, 4).

    `bell` projects qubits 2, 3 onto the even click branch of the Bell
    analyser, leaving |psi+>; `fusion` fuses and measures qubits 2, 3 in the
    sigma_x sigma_x basis, leaving |phi+>.
    """
    if mode not in ("bell", "fusion"):
        raise ValueError("mode must be 'bell' or 'fusion'")
    sources = default_sources(layout)
    groups = [{1: 1.0, 2: 1.0}, {3: 1.0, 4: 1.0}]
    state = emitted_state(sources, groups, noise, layout.mode_count)
    op = _operator_transform(mode, layout)
    state = apply_transform(state, op, list(range(layout.mode_count)))

    z2, o2 = layout.qubit_rails(2)
    z3, o3 = layout.qubit_rails(3)
    if mode == "bell":
        extra = DetectionPattern(
            {
                z2: Constraint.AT_LEAST_ONE,
                o2: Constraint.AT_LEAST_ONE,
                z3: Constraint.ZERO,
                o3: Constraint.ZERO,
            }
        )
        target = bell_state_vector("psi+")
    else:
        x = ProjectorSetting.sigma_x()
        for q in (2, 3):
            state = apply_local_qubit_unitary(
                state, q, prep_unitary(x.theta, x.phi).adjoint().matrix, layout
            )
        extra = DetectionPattern(
            {
                z2: Constraint.AT_LEAST_ONE,
                o2: Constraint.ZERO,
                z3: Constraint.AT_LEAST_ONE,
                o3: Constraint.ZERO,
            }
        )
        target = bell_state_vector("phi+")
    rho, prob = reduced_qubit_density(state, [1, 4], layout, extra_pattern=extra)
    return ProtocolResult(rho, prob, (1, 4), target)


@dataclass
class GhzResult:
    rho: np.ndarray
    success_probability: float
    qubits: tuple[int, ...]
    state: PureState | None = None

    @property
    def fidelity(self) -> float:
        target = ghz_state_vector(len(self.qubits))
        return float(np.real(target.conj() @ self.rho @ target))


def run_ghz(
    n: int,
    noise: NoiseKnobs = IDEAL,
    layout: QubitLayout = DEFAULT_LAYOUT,
) -> GhzResult:
    """Fuse the two Bell pairs into an n-photon GHZ state (n = 2, 3, 4).

    n = 4 post-selects one click per qubit; n = 3 additionally projects qubit
    4 onto the positive sigma_x outcome; n = 2 projects qubits 2 and 3 (the
    fusion-as-Bell-analyser reading) and reduces to qubits (1, 4).
    """
    if n not in (2, 3, 4):
        raise ValueError("GHZ size must be 2, 3 or 4")
    sources = default_sources(layout)
    groups = [{1: 1.0, 2: 1.0}, {3: 1.0, 4: 1.0}]
    state = emitted_state(sources, groups, noise, layout.mode_count)
    op = _operator_transform("fusion", layout)
    state = apply_transform(state, op, list(range(layout.mode_count)))

    x = ProjectorSetting.sigma_x()
    xadj = prep_unitary(x.theta, x.phi).adjoint().matrix
    if n == 4:
        qubits, extra = [1, 2, 3, 4], None
    elif n == 3:
        state = apply_local_qubit_unitary(state, 4, xadj, layout)
        z4, o4 = layout.qubit_rails(4)
        extra = DetectionPattern({z4: Constraint.AT_LEAST_ONE, o4: Constraint.ZERO})
        qubits = [1, 2, 3]
    else:
        for q in (2, 3):
            state = apply_local_qubit_unitary(state, q, xadj, layout)
        z2, o2 = layout.qubit_rails(2)
        z3, o3 = layout.qubit_rails(3)
        extra = DetectionPattern(
            {
                z2: Constraint.AT_LEAST_ONE,
                o2: Constraint.ZERO,
                z3: Constraint.AT_LEAST_ONE,
                o3: Constraint.ZERO,
            }
        )
        qubits = [1, 4]
    rho, prob = reduced_qubit_density(state, qubits, layout, extra_pattern=extra)
    pure = None
    if noise.ideal:
        pure = _ghz_pure_state(state, qubits, layout, extra)
    return GhzResult(rho, prob, tuple(qubits), pure)


def _ghz_pure_state(state, qubits, layout, extra) -> PureState | None:
    keep: dict[OccupationState, complex] = {}
    for bits in range(2 ** len(qubits)):
        outcome = {q: (bits >> (len(qubits) - 1 - i)) & 1 for i, q in enumerate(qubits)}
        pat = qubit_click_pattern(outcome, layout=layout)
        merged = dict(pat.constraints)
        if extra is not None:
            merged.update(dict(extra.constraints))
        pat = DetectionPattern(merged)
        for ket, amp in state.terms.items():
            if pat.matches(ket):
                keep[ket] = amp
    sel = PureState(keep, state.mode_count, prune=0.0)
    return None if sel.is_null else sel.normalize()


# -- interference fringes -----------------------------------------------------


@dataclass
class FringeResult:
    xs: np.ndarray
    values: np.ndarray
    visibility: float


def fringe_visibility(values) -> float:
    values = np.asarray(values, dtype=float)
    top, bottom = float(values.max()), float(values.min())
    if top + bottom == 0.0:
        raise ValueError("fringe is identically zero")
    return (top - bottom) / (top + bottom)


def hom_fringe(kind: str, points: int = 33) -> FringeResult:
    """Two-qubit interference fringe at the entangling operator.

    bell: rotate qubit 2 of |00> by an MZI and record the (+, -) sigma_x
    sigma_x coincidence after the Bell operator.  fusion: sweep the phase of
    (|0> + e^{i phi}|1>) against |+> and record the (+, +) coincidence after
    fusion.  Ideal visibility is one for both.
    """
    if kind not in ("bell", "fusion"):
        raise ValueError("kind must be 'bell' or 'fusion'")
    layout = QubitLayout.linear(2)
    xs = np.linspace(0.0, 2 * math.pi, points)
    values = []
    x = ProjectorSetting.sigma_x()
    xadj = prep_unitary(x.theta, x.phi).adjoint().matrix
    for angle in xs:
        if kind == "bell":
            state = PureState(
                {OccupationState(((0, 0, 1), (2, 0, 1))): 1.0 + 0.0j}, 4, prune=0.0
            )
            state = apply_transform(state, mzi_unitary(angle), [0, 1])
            state = apply_transform(state, o_bell_unitary(), [0, 1, 2, 3])
            outcome = {1: 0, 2: 1}
        else:
            amp = 1 / math.sqrt(2)
            terms = {}
            for b2, a2 in ((0, amp), (1, amp)):
                for b3, a3 in ((0, amp), (1, amp * np.exp(1j * angle))):
                    ket = OccupationState(((b2, 0, 1), (2 + b3, 0, 1)))
                    terms[ket] = a2 * a3
            state = PureState(terms, 4, prune=0.0)
            state = apply_transform(state, o_fusion_unitary(), [0, 1, 2, 3])
            outcome = {1: 0, 2: 0}
        for q in (1, 2):
            state = apply_local_qubit_unitary(state, q, xadj, layout)
        pattern = qubit_click_pattern(outcome, layout=layout)
        values.append(post_select(state, pattern)[1])
    values = np.array(values)
    return FringeResult(xs, values, fringe_visibility(values))


@dataclass
class HeraldedVisibility:
    raw: float
    corrected: float
    xs: np.ndarray
    fringe: np.ndarray
    background: np.ndarray


def coincidence_rate(state: PureState, detector_modes) -> float:
    """Coincidence rate in the low-quantum-efficiency limit, arbitrary units.

    With channel efficiencies of a few percent a detector seeing n photons is
    n times as likely to fire, so at leading order an n-fold bunch weighs in
    with its multiplicity product.  Linear losses scale all terms alike and
    cancel in any visibility built from these rates.
    """
    total = 0.0
    for ket, amp in state.terms.items():
        counts = ket.mode_counts()
        weight = 1
        for d in detector_modes:
            n = counts.get(d, 0)
            if n == 0:
                weight = 0
                break
            weight *= n
        if weight:
            total += (abs(amp) ** 2) * weight
    return total


def click_probability(state: PureState, efficiencies: dict[int, float]) -> float:
    """Exact joint click probability of threshold detectors with efficiency.

    A detector of efficiency eta seeing n photons fires with probability
    1 - (1 - eta)^n.  The POVM is diagonal in the occupation basis, so the
    joint probability is an amplitude-squared sum over kets.  eta -> 1 gives
    plain click counting, eta -> 0 the multiplicity-weighted rate limit.
    """
    total = 0.0
    for ket, amp in state.terms.items():
        counts = ket.mode_counts()
        weight = 1.0
        for mode, eta in efficiencies.items():
            n = counts.get(mode, 0)
            p = 1.0 - (1.0 - eta) ** n
            if p == 0.0:
                weight = 0.0
                break
            weight *= p
        if weight:
            total += (abs(amp) ** 2) * weight
    return total


def _pim_register() -> tuple[int, int, int, int, int]:
    # signal A, signal B, idler A, idler B, dump
    return 0, 1, 2, 3, 4


# Table-level channel efficiencies of the reference chip; the fringe
# visibility is insensitive to their overall scale but the relative weight of
# bunched multi-pair events depends (weakly) on their absolute size.
DEFAULT_SIGNAL_EFFICIENCY = 0.03
DEFAULT_IDLER_EFFICIENCY = 0.04


def heralded_hom_visibility(
    nbar: float,
    schmidt=(1.0,),
    points: int = 33,
    signal_efficiency: float = DEFAULT_SIGNAL_EFFICIENCY,
    idler_efficiency: float = DEFAULT_IDLER_EFFICIENCY,
) -> HeraldedVisibility:
    """Four-fold fringe of two heralded sources interfering in an MZI.

    Each source is expanded to two pairs per pulse; photons carry Schmidt-mode
    labels, so the zero-nbar visibility equals the spectral purity and rising
    nbar degrades it through multi-pair events seen by threshold detectors of
    the given channel efficiencies.  The corrected value subtracts the
    blocked-arm (multi-pair) fringes the way the switch measurement does.
    """
    if not 0.0 <= nbar < 0.2:
        raise ValueError("nbar must lie in the perturbative range [0, 0.2)")
    lam = tuple(schmidt)
    norm = math.sqrt(sum(abs(c) ** 2 for c in lam))
    lam = tuple(c / norm for c in lam)
    sig_a, sig_b, idl_a, idl_b, dump = _pim_register()
    m = 5
    sources = {
        1: PairSource("a", sig_a, idl_a),
        2: PairSource("b", sig_b, idl_b),
    }
    knobs = NoiseKnobs(nbar=nbar, schmidt=lam)
    state = emitted_state(sources, [{1: 1.0}, {2: 1.0}], knobs, m)

    xs = np.linspace(0.0, 2 * math.pi, points)
    efficiencies = {
        sig_a: signal_efficiency,
        sig_b: signal_efficiency,
        idl_a: idler_efficiency,
        idl_b: idler_efficiency,
    }
    swap_to_dump = LinearTransform(np.array([[0, 1], [1, 0]], dtype=complex))

    def fringe_for(prepared: PureState) -> np.ndarray:
        vals = []
        for angle in xs:
            out = apply_transform(prepared, mzi_unitary(angle), [sig_a, sig_b])
            vals.append(click_probability(out, efficiencies))
        return np.array(vals)

    fringe = fringe_for(state)
    blocked_b = apply_transform(state, swap_to_dump, [sig_b, dump])
    blocked_a = apply_transform(state, swap_to_dump, [sig_a, dump])
    background = fringe_for(blocked_b) + fringe_for(blocked_a)
    raw = fringe_visibility(fringe)
    corrected_values = np.clip(fringe - background, 0.0, None)
    corrected = fringe_visibility(corrected_values)
    return HeraldedVisibility(raw, corrected, xs, fringe, background)


def spectral_correlation_visibility(dimension: int, points: int = 9) -> float:
    """Heralded-MZI visibility for perfectly correlated D-mode spectra.

    One pair per source, equal weight on D signal-idler-correlated labels.
    D = 1 gives unit visibility; large D approaches the fully distinguishable
    floor of one third.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    lam = tuple(1.0 / math.sqrt(dimension) for _ in range(dimension))
    sig_a, sig_b, idl_a, idl_b, _ = _pim_register()
    sources = {
        1: PairSource("a", sig_a, idl_a),
        2: PairSource("b", sig_b, idl_b),
    }
    knobs = NoiseKnobs(nbar=0.0, schmidt=lam)
    state = emitted_state(sources, [{1: 1.0}, {2: 1.0}], knobs, 4)
    pattern = DetectionPattern(
        {
            sig_a: Constraint.AT_LEAST_ONE,
            sig_b: Constraint.AT_LEAST_ONE,
            idl_a: Constraint.AT_LEAST_ONE,
            idl_b: Constraint.AT_LEAST_ONE,
        }
    )
    xs = np.linspace(0.0, 2 * math.pi, points)
    values = [
        post_select(apply_transform(state, mzi_unitary(a), [sig_a, sig_b]), pattern)[1]
        for a in xs
    ]
    return fringe_visibility(values)


def sample_shots(
    probabilities: dict[str, float], shots: int, seed: int
) -> dict[str, int]:
    """Multinomial shot noise over post-selected outcomes.

    The total is conditioned on the post-selection rate: each of `shots`
    trials lands on an outcome with its joint probability or is discarded.
    Reproducible for a given seed.
    """
    keys = sorted(probabilities)
    if shots == 0:
        return {}
    p = np.array([max(probabilities[k], 0.0) for k in keys], dtype=float)
    rest = max(0.0, 1.0 - p.sum())
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, np.append(p, rest))
    return {k: int(c) for k, c in zip(keys, draws[:-1])}
