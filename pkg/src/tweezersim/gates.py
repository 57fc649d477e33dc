"""Ideal gate set with parameterized error channels, imaging, and pushout.

Gates act on the electronic subspace and are the identity on motion.
Single-qubit rotations follow R(theta, phi) = exp(-i theta/2 (cos(phi)
sigma_x + sin(phi) sigma_y)); the CZ applies the phase -1 on the joint
(up, up) electronic component. Two-atom operations run on an AtomPair
that stays in product form whenever one partner is in an electronic
eigenstate and promotes to a joint tensor only when the entangling gate
genuinely entangles; imaging collapses it back.

Measurement signals are normal-distributed (bright for a ground-state
atom, dark for clock-state, lost, or absent atoms); the distributions
are user-calibrated, typically through ``calibrate_imaging`` which
root-finds the bright/dark separation reproducing a target single-round
detection fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import optimize_threshold_analytic
from .errors import NumericsError, TruncationError, ValidationError
from .states import ElectronicLevel, HybridAtomState

_DEFINITE_TOL = 1e-12  # population threshold for treating a state as a Z eigenstate


@dataclass(frozen=True)
class GateErrorSpec:
    """Stochastic error model for the gate set.

    cz_phase_error_prob: chance the CZ adds a Z on one atom of the pair,
    chosen uniformly. cz_loss_prob: chance of leakage, bookkept through
    the Rydberg label and converted immediately to loss of one atom.
    sq_over_rotation_sigma: shot-constant Gaussian jitter (rad) added to
    every rotation angle, modeling slow drive decoherence; set
    per_gate_jitter to redraw it at each gate instead.
    """

    cz_phase_error_prob: float = 0.006
    cz_loss_prob: float = 0.002
    sq_over_rotation_sigma: float = 0.02
    per_gate_jitter: bool = False

    def __post_init__(self):
        for name in ("cz_phase_error_prob", "cz_loss_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.cz_phase_error_prob + self.cz_loss_prob > 1.0:
            raise ValidationError("error branch probabilities exceed 1")
        if self.sq_over_rotation_sigma < 0:
            raise ValidationError("sq_over_rotation_sigma must be >= 0")


@dataclass(frozen=True)
class ImagingSpec:
    """Fast-imaging signal model and its collateral effects."""

    bright_mean: float
    dark_mean: float = 0.0
    bright_std: float = 1.0
    dark_std: float = 1.0
    bright_loss_prob: float = 0.5
    unshelved_loss_prob: float = 0.9
    data_heating_quanta_per_round: float = 0.008

    def __post_init__(self):
        if self.bright_std <= 0 or self.dark_std <= 0:
            raise ValidationError("signal standard deviations must be positive")
        if self.bright_mean <= self.dark_mean:
            raise ValidationError("bright_mean must exceed dark_mean")
        for name in ("bright_loss_prob", "unshelved_loss_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")


@dataclass
class ShotRecord:
    """Classical outcomes of one Monte Carlo trial."""

    scenario: str
    shot: int
    signals: list = field(default_factory=list)
    ancilla_labels: list = field(default_factory=list)
    events: list = field(default_factory=list)
    data_lost: bool = False
    data_label: str = None
    data_n: int = None
    extra: dict = field(default_factory=dict)


def rotation_matrix(theta: float, phi: float) -> np.ndarray:
    """R(theta, phi) in the (down, up) ordering."""
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    return np.array(
        [[c, -1j * s * np.exp(1j * phi)], [-1j * s * np.exp(-1j * phi), c]],
        dtype=np.complex128,
    )


def _z_definite_level(state: HybridAtomState):
    """The electronic level the state definitely occupies, else None."""
    if state.lost:
        return None
    p_down = state.population(ElectronicLevel.DOWN)
    if p_down >= 1.0 - _DEFINITE_TOL:
        return ElectronicLevel.DOWN
    if p_down <= _DEFINITE_TOL:
        return ElectronicLevel.UP
    return None


def _collapse_electronic(state: HybridAtomState, level: ElectronicLevel):
    keep = int(level)
    p = state.population(level)
    if p <= 0:
        raise NumericsError("cannot collapse onto an unoccupied level")
    amps = np.zeros_like(state.amps)
    amps[keep] = state.amps[keep] / np.sqrt(p)
    state.amps = amps
    return state


@dataclass
class AtomPair:
    """Data + ancilla pair, product by default, joint when entangled.

    The joint tensor is indexed (data_level, data_n, anc_level, anc_n).
    Electronic gates and the measurement channels below keep the pair
    product whenever physics allows, so most protocol shots never build
    the joint tensor.
    """

    data: HybridAtomState
    anc: HybridAtomState
    joint: np.ndarray = None
    events: list = field(default_factory=list)

    @property
    def is_product(self) -> bool:
        return self.joint is None

    def ensure_joint(self):
        if self.joint is None:
            if self.data.lost or self.anc.lost:
                raise ValidationError("cannot entangle a lost atom")
            self.joint = np.einsum("ln,km->lnkm", self.data.amps, self.anc.amps)
        return self.joint

    def apply_electronic(self, which: str, mat: np.ndarray):
        """Apply a 2x2 electronic operator (x identity on motion) to one atom."""
        if which not in ("data", "anc"):
            raise ValidationError(f"which must be 'data' or 'anc', got {which!r}")
        if self.joint is None:
            state = self.data if which == "data" else self.anc
            if not state.lost:
                state.amps = mat @ state.amps
        elif which == "data":
            self.joint = np.einsum("al,lnkm->ankm", mat, self.joint)
        else:
            self.joint = np.einsum("bk,lnkm->lnbm", mat, self.joint)
        return self

    def apply_data_motional(self, mat4: np.ndarray):
        """Apply a (level, n) unitary to the data atom (shape (2,M,2,M))."""
        if self.joint is None:
            if not self.data.lost:
                m = self.data.n_max + 1
                self.data.amps = (
                    mat4.reshape(2 * m, 2 * m) @ self.data.amps.reshape(-1)
                ).reshape(2, m)
        else:
            self.joint = np.einsum("aoln,lnkm->aokm", mat4, self.joint)
        return self

    def split_after_anc_collapse(self, level: ElectronicLevel):
        """Factor the joint tensor after the ancilla collapsed to `level`."""
        if self.joint is None:
            _collapse_electronic(self.anc, level)
            return self
        t = self.joint[:, :, int(level), :]
        norm = np.linalg.norm(t)
        if norm <= 0:
            raise NumericsError("collapse onto an unoccupied ancilla level")
        t = t / norm
        m = t.shape[1]
        u, s, vh = np.linalg.svd(t.reshape(2 * m, m), full_matrices=False)
        if s.size > 1 and s[1] > 1e-9:
            raise NumericsError(
                "ancilla collapse left residual data-ancilla motional entanglement"
            )
        self.data.amps = (u[:, 0] * s[0]).reshape(2, m)
        anc_amps = np.zeros((2, m), dtype=np.complex128)
        anc_amps[int(level)] = vh[0]
        self.anc.amps = anc_amps
        self.joint = None
        return self

    def anc_electronic_populations(self) -> np.ndarray:
        if self.anc.lost:
            return np.zeros(2)
        if self.joint is None:
            return np.sum(np.abs(self.anc.amps) ** 2, axis=1)
        return np.sum(np.abs(self.joint) ** 2, axis=(0, 1, 3))

    def measure_data(self, rng):
        """Projective (level, n) measurement of the data atom.

        Collapses the data atom onto the sampled basis state and, for an
        entangled pair, leaves the ancilla in the conditional state.
        """
        if self.data.lost:
            return None
        if self.joint is None:
            return projective_measure(self.data, rng)
        probs = np.sum(np.abs(self.joint) ** 2, axis=(2, 3))
        flat = probs.reshape(-1)
        idx = int(rng.choice(flat.size, p=flat / flat.sum()))
        level, n = divmod(idx, probs.shape[1])
        anc_flat = self.joint[level, n]
        self.anc.amps = anc_flat / np.linalg.norm(anc_flat)
        amps = np.zeros_like(self.data.amps)
        amps[level, n] = 1.0
        self.data.amps = amps
        self.joint = None
        return ElectronicLevel(level), int(n)

    def data_electronic_populations(self) -> np.ndarray:
        if self.data.lost:
            return np.zeros(2)
        if self.joint is None:
            return np.sum(np.abs(self.data.amps) ** 2, axis=1)
        return np.sum(np.abs(self.joint) ** 2, axis=(1, 2, 3))


def projective_measure(state: HybridAtomState, rng):
    """Sample a (level, n) projective outcome and collapse the state."""
    if state.lost:
        return None
    probs = np.abs(state.amps) ** 2
    flat = probs.reshape(-1)
    idx = int(rng.choice(flat.size, p=flat / flat.sum()))
    level, n = divmod(idx, probs.shape[1])
    amps = np.zeros_like(state.amps)
    amps[level, n] = 1.0
    state.amps = amps
    return ElectronicLevel(level), int(n)


# ---------------------------------------------------------------------------
# gate operations


def apply_rotation(
    state: HybridAtomState,
    phase: float,
    angle: float,
    errors: GateErrorSpec = None,
    rng=None,
    shot_jitter: float = None,
):
    """Electronic rotation R(angle, phase), identity on motion.

    With an error spec the angle picks up Gaussian jitter: the
    shot-constant value when provided, or a fresh draw per gate.
    """
    if state.lost:
        return state
    angle = angle + _rotation_jitter(errors, rng, shot_jitter)
    state.amps = rotation_matrix(angle, phase) @ state.amps
    return state


def _rotation_jitter(errors, rng, shot_jitter):
    if errors is None or errors.sq_over_rotation_sigma == 0.0:
        return 0.0
    if shot_jitter is not None and not errors.per_gate_jitter:
        return shot_jitter
    if rng is None:
        raise ValidationError("rotation jitter needs an rng")
    return rng.normal(0.0, errors.sq_over_rotation_sigma)


def pair_rotation(
    pair: AtomPair,
    which: str,
    phase: float,
    angle: float,
    errors: GateErrorSpec = None,
    rng=None,
    shot_jitter: float = None,
):
    angle = angle + _rotation_jitter(errors, rng, shot_jitter)
    if pair.joint is None:
        target = pair.data if which == "data" else pair.anc
        if target.lost:
            return pair
    return pair.apply_electronic(which, rotation_matrix(angle, phase))


def apply_local_z(state: HybridAtomState, phi: float):
    """Multiply the up-level amplitudes by exp(i phi); exact and error-free."""
    if state.lost:
        return state
    state.amps[int(ElectronicLevel.UP)] *= np.exp(1j * phi)
    return state


def pair_local_z(pair: AtomPair, which: str, phi: float):
    mat = np.diag([1.0, np.exp(1j * phi)]).astype(np.complex128)
    if pair.joint is None:
        target = pair.data if which == "data" else pair.anc
        if target.lost:
            return pair
    return pair.apply_electronic(which, mat)


def apply_cz(pair: AtomPair, errors: GateErrorSpec = None, rng=None) -> AtomPair:
    """CZ on the pair: phase -1 on (up, up), identity on motion.

    Vacuous (and errorless) when either atom is lost or absent. Error
    branches follow the ideal gate: a Z on a uniformly chosen atom with
    cz_phase_error_prob, or loss of a uniformly chosen atom (leakage via
    the Rydberg label) with cz_loss_prob.
    """
    if pair.data.lost or pair.anc.lost:
        pair.events.append("cz_skipped_lost_atom")
        return pair
    _apply_cz_ideal(pair)
    if errors is None:
        return pair
    if rng is None:
        raise ValidationError("stochastic CZ errors need an rng")
    u = rng.uniform()
    victim = "data" if rng.uniform() < 0.5 else "anc"
    if u < errors.cz_loss_prob:
        # leakage: population routed through the Rydberg label becomes loss
        if pair.joint is not None:
            level = _born_anc_level(pair, rng) if victim == "anc" else None
            if victim == "anc":
                pair.split_after_anc_collapse(level)
            else:
                _collapse_joint_data_loss(pair, rng)
        (pair.data if victim == "data" else pair.anc).mark_lost()
        pair.events.append(f"cz_leakage_loss_{victim}")
    elif u < errors.cz_loss_prob + errors.cz_phase_error_prob:
        pair_local_z(pair, victim, np.pi)
        pair.events.append(f"cz_z_error_{victim}")
    return pair


def _apply_cz_ideal(pair: AtomPair):
    if pair.joint is not None:
        pair.joint[1, :, 1, :] *= -1.0
        return pair
    data_level = _z_definite_level(pair.data)
    anc_level = _z_definite_level(pair.anc)
    if data_level == ElectronicLevel.DOWN or anc_level == ElectronicLevel.DOWN:
        return pair  # no (up, up) component
    if data_level == ElectronicLevel.UP:
        return pair.apply_electronic("anc", np.diag([1.0, -1.0]).astype(np.complex128))
    if anc_level == ElectronicLevel.UP:
        return pair.apply_electronic("data", np.diag([1.0, -1.0]).astype(np.complex128))
    pair.ensure_joint()
    pair.joint[1, :, 1, :] *= -1.0
    return pair


def _born_anc_level(pair: AtomPair, rng) -> ElectronicLevel:
    pops = pair.anc_electronic_populations()
    total = pops.sum()
    if total <= 0:
        raise NumericsError("ancilla carries no population")
    return (
        ElectronicLevel.DOWN
        if rng.uniform() < pops[0] / total
        else ElectronicLevel.UP
    )


def _collapse_joint_data_loss(pair: AtomPair, rng):
    """Losing the data atom measures nothing on the ancilla's phase; trace
    it out by projecting the data electronic state first (the environment
    learns the leaked atom's branch)."""
    pops = pair.data_electronic_populations()
    level = ElectronicLevel.DOWN if rng.uniform() < pops[0] / pops.sum() else ElectronicLevel.UP
    t = pair.joint[int(level), :, :, :]
    norm = np.linalg.norm(t)
    t = t / norm
    m = t.shape[0]
    u, s, vh = np.linalg.svd(t.reshape(m, 2 * m), full_matrices=False)
    if s.size > 1 and s[1] > 1e-9:
        raise NumericsError("data loss left residual motional entanglement")
    pair.anc.amps = (vh[0] * s[0]).reshape(2, m)
    data_amps = np.zeros((2, m), dtype=np.complex128)
    data_amps[int(level)] = u[:, 0]
    pair.data.amps = data_amps
    pair.joint = None


# ---------------------------------------------------------------------------
# measurement channels


def image(state: HybridAtomState, spec: ImagingSpec, rng):
    """Fast imaging of one atom: (signal, state).

    Born rule on the electronic populations: a ground-state atom is
    bright (and survives minus bright_loss_prob), a clock-state atom is
    dark; lost or absent atoms draw dark signals. Projection collapses
    the electronic state and leaves motion untouched.
    """
    if state.lost:
        return float(rng.normal(spec.dark_mean, spec.dark_std)), state
    p_down = state.population(ElectronicLevel.DOWN)
    if rng.uniform() < p_down:
        _collapse_electronic(state, ElectronicLevel.DOWN)
        signal = float(rng.normal(spec.bright_mean, spec.bright_std))
        if rng.uniform() < spec.bright_loss_prob:
            state.mark_lost()
    else:
        _collapse_electronic(state, ElectronicLevel.UP)
        signal = float(rng.normal(spec.dark_mean, spec.dark_std))
    return signal, state


def image_pair_ancilla(pair: AtomPair, spec: ImagingSpec, rng):
    """Image the ancilla of a (possibly entangled) pair."""
    if pair.anc.lost:
        return float(rng.normal(spec.dark_mean, spec.dark_std)), pair
    level = _born_anc_level(pair, rng)
    pair.split_after_anc_collapse(level)
    if level == ElectronicLevel.DOWN:
        signal = float(rng.normal(spec.bright_mean, spec.bright_std))
        if rng.uniform() < spec.bright_loss_prob:
            pair.anc.mark_lost()
    else:
        signal = float(rng.normal(spec.dark_mean, spec.dark_std))
    return signal, pair


def expose_to_imaging(state: HybridAtomState, spec: ImagingSpec, rng):
    """Collateral action of the global imaging light on a non-target atom.

    Residual ground-state population scatters: it is projected out and
    lost with unshelved_loss_prob; clock-state population is dark and
    survives with its motional coherence intact.
    """
    if state.lost:
        return state
    p_down = state.population(ElectronicLevel.DOWN)
    if rng.uniform() < p_down:
        _collapse_electronic(state, ElectronicLevel.DOWN)
        if rng.uniform() < spec.unshelved_loss_prob:
            state.mark_lost()
    else:
        _collapse_electronic(state, ElectronicLevel.UP)
    return state


def heating_jump(state: HybridAtomState, rng, probability: float):
    """Phenomenological per-round heating: one quantum up with the given
    probability (amplitudes shifted up the ladder)."""
    if state.lost or probability <= 0.0:
        return state
    if rng.uniform() >= probability:
        return state
    top = state.population(n=state.n_max)
    if top > 1e-6:
        raise TruncationError("heating jump would push population past n_max")
    state.amps[:, 1:] = state.amps[:, :-1]
    state.amps[:, 0] = 0.0
    norm = np.sqrt(state.norm_sq())
    if norm <= 0:
        raise NumericsError("heating jump emptied the state")
    state.amps /= norm
    return state


def pushout(state: HybridAtomState, rng):
    """Resonant removal of ground-state population: Born-rule branch to
    loss for the ground state, survival collapsed to the clock manifold."""
    if state.lost:
        return state
    p_down = state.population(ElectronicLevel.DOWN)
    if rng.uniform() < p_down:
        state.mark_lost()
    else:
        _collapse_electronic(state, ElectronicLevel.UP)
    return state


# ---------------------------------------------------------------------------
# calibration


def calibrate_imaging(
    target_fidelity: float = 0.90,
    p1: float = 0.5,
    dark_mean: float = 0.0,
    dark_std: float = 1.0,
    bright_std: float = 1.0,
    **kwargs,
) -> ImagingSpec:
    """ImagingSpec whose threshold-optimized single-round detection
    fidelity at prior p1 equals target_fidelity (root-finding on the
    bright/dark separation)."""
    from scipy.optimize import brentq

    if not 0.5 < target_fidelity < 1.0:
        raise ValidationError("target_fidelity must be in (0.5, 1)")

    def gap(sep):
        res = optimize_threshold_analytic(
            dark_mean + sep, bright_std, dark_mean, dark_std, p1
        )
        return res.fidelity - target_fidelity

    sep = brentq(gap, 1e-6, 40.0 * max(dark_std, bright_std), xtol=1e-12)
    return ImagingSpec(
        bright_mean=dark_mean + sep,
        dark_mean=dark_mean,
        bright_std=bright_std,
        dark_std=dark_std,
        **kwargs,
    )
