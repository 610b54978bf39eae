"""Concrete circuit elements of the 8-mode dual-rail processor.

Phase shifters, MMIs and MZIs are 2x2 blocks; the two-qubit entangling
operators act on the four rails of a qubit pair.  Qubit k (1-based) occupies
spatial modes (2k-2, 2k-1) with the zero rail first, reading the register
top to bottom.  Logical |0> means one photon in the zero rail.

Matrix conventions follow fock.apply_transform: a^dag_j -> sum_k U[k, j] a^dag_k,
and composing "A then B" is the product B @ A.  Global phases are kept where
the component algebra produces them and are never asserted on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import LinearTransform, PureState, state_from_occupation


@dataclass(frozen=True)
class QubitLayout:
    """Rail assignment: per qubit a (zero_rail, one_rail) pair of mode indices."""

    rails: tuple[tuple[int, int], ...]

    def __post_init__(self):
        flat = [m for pair in self.rails for m in pair]
        if len(set(flat)) != len(flat):
            raise ValueError("rail indices must be distinct")

    @classmethod
    def linear(cls, n_qubits: int = 4) -> "QubitLayout":
        return cls(tuple((2 * k, 2 * k + 1) for k in range(n_qubits)))

    @property
    def n_qubits(self) -> int:
        return len(self.rails)

    @property
    def mode_count(self) -> int:
        return max(m for pair in self.rails for m in pair) + 1

    def zero_rail(self, qubit: int) -> int:
        """`qubit` is 1-based, matching the device labelling."""
        return self.rails[qubit - 1][0]

    def one_rail(self, qubit: int) -> int:
        return self.rails[qubit - 1][1]

    def qubit_rails(self, qubit: int) -> tuple[int, int]:
        return self.rails[qubit - 1]


DEFAULT_LAYOUT = QubitLayout.linear(4)


@dataclass(frozen=True)
class ProjectorSetting:
    """Angles of one prepare/measure stage: U = U_MZI(theta) U_Phase(phi).

    The projective stage is the adjoint, i.e. U_Phase(-phi) then U_MZI(theta)
    up to the MZI's global phase.
    """

    theta: float
    phi: float
    basis_name: str | None = None

    @classmethod
    def sigma_z(cls) -> "ProjectorSetting":
        return cls(math.pi, 0.0, "sigma_z")

    @classmethod
    def sigma_x(cls) -> "ProjectorSetting":
        return cls(math.pi / 2, 0.0, "sigma_x")

    @classmethod
    def sigma_y(cls) -> "ProjectorSetting":
        return cls(math.pi / 2, math.pi / 2, "sigma_y")

    @classmethod
    def omega(cls, angle: float) -> "ProjectorSetting":
        """Basis of cos(angle) sigma_x + sin(angle) sigma_y; outcome 0 is +1."""
        return cls(math.pi / 2, angle, "omega")


def phase_unitary(theta: float) -> LinearTransform:
    """Relative phase across adjacent modes: diag(1, e^{i theta})."""
    if not math.isfinite(theta):
        raise ValueError("phase must be finite")
    return LinearTransform(np.diag([1.0, np.exp(1j * theta)]))


def mmi_unitary() -> LinearTransform:
    """Balanced 2x2 multimode-interference coupler."""
    return LinearTransform(np.array([[1j, 1.0], [1.0, 1j]]) / math.sqrt(2))


def mzi_unitary(theta: float) -> LinearTransform:
    """MMI - phase - MMI interferometer.

    Equals e^{i(theta+pi)/2} [[sin(t/2), cos(t/2)], [cos(t/2), -sin(t/2)]];
    theta = pi/2 is Hadamard-like up to the global z-rotation e^{i 3pi/4}.
    """
    if not math.isfinite(theta):
        raise ValueError("phase must be finite")
    s, c = math.sin(theta / 2), math.cos(theta / 2)
    return LinearTransform(
        np.exp(1j * (theta + math.pi) / 2) * np.array([[s, c], [c, -s]])
    )


def prep_unitary(theta: float, phi: float) -> LinearTransform:
    """Single-qubit preparation stage U = U_MZI(theta) U_Phase(phi).

    Column b is the rail amplitude vector of the state prepared from |b>;
    equivalently the analysis ket of outcome b for the matching measure stage.
    """
    return LinearTransform(mzi_unitary(theta).matrix @ phase_unitary(phi).matrix)


def measure_unitary(theta: float, phi: float) -> LinearTransform:
    """Projective stage mapping the (theta, phi) basis back to the rails."""
    return prep_unitary(theta, phi).adjoint()


def embed(block: LinearTransform, rails: list[int], mode_count: int) -> LinearTransform:
    """Place a small transform on the given rails, identity elsewhere."""
    if len(rails) != block.dim:
        raise ValueError("rail count must match block dimension")
    if len(set(rails)) != len(rails):
        raise ValueError("rail collision in embed")
    if any(r < 0 or r >= mode_count for r in rails):
        raise ValueError("rail outside register")
    mat = np.eye(mode_count, dtype=complex)
    for a, ra in enumerate(rails):
        for b, rb in enumerate(rails):
            mat[ra, rb] = block.matrix[a, b]
        for other in range(mode_count):
            if other not in rails:
                mat[ra, other] = 0.0
                mat[other, ra] = 0.0
    # restore identity off the block
    for other in range(mode_count):
        if other not in rails:
            mat[other, other] = 1.0
    return LinearTransform(mat, lossy=block.lossy)


def _exchange_matrix() -> np.ndarray:
    # swap one-rail of the first qubit with zero-rail of the second
    ex = np.eye(4, dtype=complex)
    ex[[1, 2]] = ex[[2, 1]]
    return ex


def o_bell_unitary() -> LinearTransform:
    """Bosonic Bell projector on rails (z_a, o_a, z_b, o_b) of a qubit pair.

    Exchange, Hadamard-like interference on each qubit, exchange again.  With
    one-photon-per-qubit post-selection this distinguishes the two odd-parity
    Bell states; even-parity inputs bunch and never produce coincidences.
    """
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    ex = _exchange_matrix()
    mid = np.zeros((4, 4), dtype=complex)
    mid[:2, :2] = h
    mid[2:, 2:] = h
    return LinearTransform(ex @ mid @ ex)


def o_fusion_unitary() -> LinearTransform:
    """Fusion operator: transmit the |0> rails, swap the |1> rails.

    Built as exchange / (identity-like MZI, swap-like MZI) / exchange with the
    inner MZIs at theta = pi and theta = 0, so the component phases ride along.
    """
    ex = _exchange_matrix()
    mid = np.zeros((4, 4), dtype=complex)
    mid[:2, :2] = mzi_unitary(math.pi).matrix
    mid[2:, 2:] = mzi_unitary(0.0).matrix
    return LinearTransform(ex @ mid @ ex)


def o_bell_on(layout: QubitLayout, qubit_a: int = 2, qubit_b: int = 3) -> tuple[LinearTransform, list[int]]:
    rails = list(layout.qubit_rails(qubit_a)) + list(layout.qubit_rails(qubit_b))
    return o_bell_unitary(), rails


def o_fusion_on(layout: QubitLayout, qubit_a: int = 2, qubit_b: int = 3) -> tuple[LinearTransform, list[int]]:
    rails = list(layout.qubit_rails(qubit_a)) + list(layout.qubit_rails(qubit_b))
    return o_fusion_unitary(), rails


def _stage(settings, layout: QubitLayout, adjoint: bool) -> LinearTransform:
    if len(settings) != layout.n_qubits:
        raise ValueError("one setting per qubit required")
    mat = np.eye(layout.mode_count, dtype=complex)
    for k, setting in enumerate(settings, start=1):
        block = prep_unitary(setting.theta, setting.phi)
        if adjoint:
            block = block.adjoint()
        z, o = layout.qubit_rails(k)
        mat[np.ix_([z, o], [z, o])] = block.matrix
    return LinearTransform(mat)


def prep_stage(settings, layout: QubitLayout = DEFAULT_LAYOUT) -> LinearTransform:
    """Block-diagonal preparation over the register, one block per qubit."""
    return _stage(settings, layout, adjoint=False)


def measure_stage(settings, layout: QubitLayout = DEFAULT_LAYOUT) -> LinearTransform:
    """Adjoint of prep_stage with the same settings."""
    return _stage(settings, layout, adjoint=True)


def crosser(mode_count: int, mode_a: int, mode_b: int) -> LinearTransform:
    """Waveguide crossing as an exact lossless mode permutation."""
    mat = np.eye(mode_count, dtype=complex)
    mat[[mode_a, mode_b]] = mat[[mode_b, mode_a]]
    return LinearTransform(mat)


# -- dual-rail state helpers -------------------------------------------------


def dual_rail_ket(
    bits: str, layout: QubitLayout = DEFAULT_LAYOUT, label: int = 0
) -> PureState:
    """Computational-basis logical ket |bits> as a Fock state."""
    if len(bits) != layout.n_qubits:
        raise ValueError("bit count must match layout")
    entries = []
    for k, bit in enumerate(bits, start=1):
        z, o = layout.qubit_rails(k)
        entries.append((o if bit == "1" else z, label, 1))
    return state_from_occupation(entries, layout.mode_count)


def logical_state(
    amplitudes: dict[str, complex], layout: QubitLayout = DEFAULT_LAYOUT, label: int = 0
) -> PureState:
    """Superposition over logical bitstrings, normalised."""
    state = None
    for bits, amp in amplitudes.items():
        ket = dual_rail_ket(bits, layout, label).scaled(amp)
        state = ket if state is None else state.add(ket)
    if state is None:
        raise ValueError("empty amplitude map")
    return state.normalize()
