"""Preset protocol circuits and the Monte Carlo shot engine.

Three protocols run over the gate layer: repeated ancilla-based
readout, coherence-preserving loss detection with motional shelving,
and algorithmic cooling. Per-shot randomness comes from a documented
counter scheme, rng = PCG64(SeedSequence(master_seed, spawn_key)), where
the spawn key identifies (scenario index, [phase index,] shot index);
results are therefore independent of worker count and execution order.

The ancilla-flip block (a CNOT up to calibrated phases) decomposes as
local Z on the data, X^(1/2) on the ancilla, CZ, and a second X^(1/2)
whose phase compensates the entangling step; with the ideal CZ of this
model the compensated phase is pi. In the algorithmic-cooling circuit
the ancilla ends on the equator in one of two orthogonal states
correlated with whether the data atom started in the motional ground
state; the labeling below (plus for ground-state data) is a fixed
convention of this gate set.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    DEFAULT_STEPS_PER_PULSE,
    NoiseModel,
    PulseKind,
    PulseSpec,
    evolve,
    sample_noise,
    sideband_rabi,
    spectroscopy_pi_duration,
)
from .errors import ValidationError
from .gates import (
    AtomPair,
    GateErrorSpec,
    HybridAtomState,
    ImagingSpec,
    ShotRecord,
    apply_cz,
    apply_rotation,
    calibrate_imaging,
    expose_to_imaging,
    heating_jump,
    image_pair_ancilla,
    pair_local_z,
    pair_rotation,
)
from .states import (
    DEFAULT_N_MAX,
    ElectronicLevel,
    ThermalSpec,
    TrapSpec,
    prepare_state,
)

SCENARIOS = ("present", "absent")
PROTOCOL_KINDS = (
    "repeated_readout",
    "loss_detection",
    "algorithmic_cooling",
    "phase_calibration",
    "sideband_scan",
)

#: Ancilla end states of the cooling circuit (fixed phase convention):
#: data initially in the motional ground state -> ANC_PLUS, else ANC_MINUS.
ANC_PLUS = np.array([1.0, 1.0j]) / np.sqrt(2.0)  # (down, up) amplitudes
ANC_MINUS = np.array([1.0, -1.0j]) / np.sqrt(2.0)

DEFAULT_TRAP = TrapSpec(
    omega_t=2 * np.pi * 35e3,
    mass=88 * 1.66053906892e-27,
    k=2 * np.pi / 698e-9,
)


@dataclass
class SidebandSpectrum:
    """Excitation-vs-detuning data with binomial errors and pulse metadata."""

    detuning_hz: np.ndarray
    p_exc: np.ndarray
    stderr: np.ndarray
    shots: np.ndarray
    duration: float = None
    rabi: float = None
    eta: float = None
    side: str = "both"

    def __post_init__(self):
        self.detuning_hz = np.asarray(self.detuning_hz, dtype=float)
        self.p_exc = np.asarray(self.p_exc, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        self.shots = np.asarray(self.shots)
        if np.any(self.p_exc < 0) or np.any(self.p_exc > 1):
            raise ValidationError("excitation probabilities must lie in [0, 1]")


@dataclass
class ProtocolConfig:
    """Knobs shared by the protocol runners; validated per kind."""

    kind: str
    shots: int = 1000
    seed: int = 12345
    n_cyc: int = 4
    p1_priors: tuple = (0.5, 0.9)
    scenarios: tuple = SCENARIOS
    n_max: int = DEFAULT_N_MAX
    data_psi: str = None  # "up" | "down" | "plus"; default depends on kind
    data_nbar: float = 0.0
    gate_errors: GateErrorSpec = field(default_factory=GateErrorSpec)
    imaging: ImagingSpec = None
    trap: TrapSpec = None
    rabi: float = 2 * np.pi * 2e3
    noise: NoiseModel = None
    shelving_transfer_fidelity: float = None
    steps_per_pulse: int = DEFAULT_STEPS_PER_PULSE
    analyzer_phases: tuple = tuple(np.linspace(0, 2 * np.pi, 13))
    comp_phase: float = np.pi
    local_z_phase: float = 0.0
    ancilla_absent_prob: float = 0.0
    ideal_cooling_rsb: bool = True
    include_carrier_in_scan: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ValidationError(f"unknown protocol kind {self.kind!r}")
        if self.shots < 1:
            raise ValidationError(f"shots must be >= 1, got {self.shots}")
        if self.kind == "repeated_readout" and self.n_cyc < 1:
            raise ValidationError("n_cyc must be >= 1 for repeated readout")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValidationError(f"unknown scenario {s!r}")
        if self.trap is None:
            self.trap = DEFAULT_TRAP
        if self.imaging is None:
            self.imaging = calibrate_imaging(target_fidelity=0.90, p1=0.5)
        if self.data_psi is None:
            self.data_psi = {"loss_detection": "plus", "algorithmic_cooling": "down"}.get(
                self.kind, "up"
            )
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


@dataclass
class ShotContext:
    """Per-shot randomness and the shot-constant rotation jitter."""

    rng: np.random.Generator
    errors: GateErrorSpec = None
    rotation_jitter: float = 0.0

    @classmethod
    def fresh(cls, rng, errors):
        jitter = 0.0
        if errors is not None and errors.sq_over_rotation_sigma > 0 and not errors.per_gate_jitter:
            jitter = float(rng.normal(0.0, errors.sq_over_rotation_sigma))
        return cls(rng=rng, errors=errors, rotation_jitter=jitter)


def shot_rng(master_seed: int, *spawn_key: int) -> np.random.Generator:
    """Deterministic per-trial generator from the master seed and indices."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.PCG64(ss))


def _map_shots(fn, n_shots: int, workers: int):
    if workers <= 1:
        return [fn(i) for i in range(n_shots)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n_shots)))


def _electronic_label(state: HybridAtomState) -> str:
    if state.lost:
        return "lost"
    return "down" if state.population(ElectronicLevel.DOWN) > 0.5 else "up"


def _image_and_label(pair: AtomPair, imaging: ImagingSpec, rng):
    """Image the ancilla and label the detected branch.

    An ancilla removed by the imaging light after scattering still counts
    as detected in the ground state; only an atom lost before imaging is
    labeled lost.
    """
    lost_before = pair.anc.lost
    signal, pair = image_pair_ancilla(pair, imaging, rng)
    if lost_before:
        label = "lost"
    elif pair.anc.lost:
        label = "down"  # bright branch, then removed by the imaging light
    else:
        label = _electronic_label(pair.anc)
    return signal, label, pair


def _born_motional_n(state: HybridAtomState, rng) -> int:
    p = state.motional_distribution()
    p = p / p.sum()
    return int(rng.choice(p.size, p=p))


def _prepare_data(config: ProtocolConfig, rng) -> HybridAtomState:
    psi = {
        "up": np.array([0.0, 1.0]),
        "down": np.array([1.0, 0.0]),
        "plus": np.array([1.0, 1.0]) / np.sqrt(2.0),
    }.get(config.data_psi)
    if psi is None:
        raise ValidationError(f"unknown data_psi {config.data_psi!r}")
    if config.data_nbar > 0:
        motional = ThermalSpec(nbar=config.data_nbar, n_max=config.n_max)
        return prepare_state(psi, motional, n_max=config.n_max, rng=rng)
    return prepare_state(psi, 0, n_max=config.n_max)


def _fresh_ancilla(config: ProtocolConfig, rng, level=ElectronicLevel.UP) -> HybridAtomState:
    if config.ancilla_absent_prob > 0 and rng.uniform() < config.ancilla_absent_prob:
        return HybridAtomState.absent(config.n_max)
    return prepare_state(level, 0, n_max=config.n_max)


# ---------------------------------------------------------------------------
# circuit blocks


def cnot_block(pair: AtomPair, ctx: ShotContext, comp_phase: float = np.pi,
               local_z_phase: float = 0.0, entangle: bool = True) -> AtomPair:
    """Ancilla-flip block: Z_local(data), X^(1/2)(anc), CZ, X^(1/2)(anc, phase).

    comp_phase = pi is the calibrated point of this gate set: it flips
    the ancilla when the data atom is present (in the clock state) and
    returns it unchanged when the data atom is absent.
    """
    pair_local_z(pair, "data", local_z_phase)
    pair_rotation(pair, "anc", 0.0, np.pi / 2, ctx.errors, ctx.rng, ctx.rotation_jitter)
    if entangle:
        apply_cz(pair, ctx.errors, ctx.rng)
    pair_rotation(pair, "anc", comp_phase, np.pi / 2, ctx.errors, ctx.rng, ctx.rotation_jitter)
    return pair


def ideal_rsb_map(n_max: int) -> np.ndarray:
    """Perfect red-sideband pi unitary on (level, n): removes one quantum
    from every excited Fock level, leaves (down, 0) untouched."""
    m = n_max + 1
    u = np.zeros((2, m, 2, m), dtype=np.complex128)
    u[0, 0, 0, 0] = 1.0
    for n in range(1, m):
        u[1, n - 1, 0, n] = 1.0
        u[0, n, 1, n - 1] = -1.0
    u[1, m - 1, 1, m - 1] = 1.0  # uncoupled at this truncation
    return u


def cooling_circuit(pair: AtomPair, ctx: ShotContext, rsb_map: np.ndarray = None) -> AtomPair:
    """Six-gate algorithmic-cooling sequence.

    RSB pi on the data (selective), X^(1/2) on the ancilla (selective),
    CZ, global X^(-1/2), CZ, global X^(-1/2). Data and ancilla both start
    in the ground electronic state; ideally the data ends in the clock
    state with one motional quantum removed and the ancilla ends in
    ANC_PLUS/ANC_MINUS according to the data's initial motional state.
    """
    if rsb_map is None:
        rsb_map = ideal_rsb_map(pair.data.n_max)
    pair.apply_data_motional(rsb_map)
    pair_rotation(pair, "anc", 0.0, np.pi / 2, ctx.errors, ctx.rng, ctx.rotation_jitter)
    apply_cz(pair, ctx.errors, ctx.rng)
    for which in ("data", "anc"):
        pair_rotation(pair, which, 0.0, -np.pi / 2, ctx.errors, ctx.rng, ctx.rotation_jitter)
    apply_cz(pair, ctx.errors, ctx.rng)
    for which in ("data", "anc"):
        pair_rotation(pair, which, 0.0, -np.pi / 2, ctx.errors, ctx.rng, ctx.rotation_jitter)
    return pair


def _shelving_pulse(config: ProtocolConfig) -> PulseSpec:
    """Blue-sideband shelving pulse on the 0<->1 pair.

    A full pi pulse by default; when shelving_transfer_fidelity t is set
    the duration is shortened so the pair transfer equals t exactly.
    """
    omega01 = sideband_rabi(0, 1, config.trap.eta, config.rabi)
    if config.shelving_transfer_fidelity is None:
        duration = np.pi / omega01
    else:
        t = config.shelving_transfer_fidelity
        if not 0.0 < t <= 1.0:
            raise ValidationError("shelving_transfer_fidelity must be in (0, 1]")
        duration = 2.0 * math.asin(math.sqrt(t)) / omega01
    return PulseSpec(PulseKind.BLUE_SIDEBAND, rabi=config.rabi, duration=duration)


def _apply_shelving(state: HybridAtomState, config: ProtocolConfig, rng, invert: bool):
    pulse = _shelving_pulse(config)
    if invert:
        pulse = replace(pulse, phase=pulse.phase + np.pi)
    realization = None
    if config.noise is not None:
        dt = pulse.duration / config.steps_per_pulse
        realization = sample_noise(config.noise, pulse.duration, dt, rng)
    return evolve(state, pulse, config.trap, realization)


# ---------------------------------------------------------------------------
# protocol runners


def run_repeated_readout(config: ProtocolConfig) -> list:
    """Repeated ancilla-based presence readout.

    Per shot and scenario: the data atom (clock state if present) is kept
    while a fresh clock-state ancilla is brought in each round, flipped
    conditionally by the CNOT block, and imaged. Signals are recorded per
    round; the data atom state carries across rounds.
    """
    records = []
    for scenario in config.scenarios:
        s_idx = SCENARIOS.index(scenario)

        def one_shot(i, scenario=scenario, s_idx=s_idx):
            rng = shot_rng(config.seed, s_idx, i)
            ctx = ShotContext.fresh(rng, config.gate_errors)
            if scenario == "present":
                data = _prepare_data(config, rng)
            else:
                data = HybridAtomState.absent(config.n_max)
            rec = ShotRecord(scenario=scenario, shot=i)
            for _ in range(config.n_cyc):
                anc = _fresh_ancilla(config, rng)
                pair = AtomPair(data=data, anc=anc)
                cnot_block(pair, ctx, config.comp_phase, config.local_z_phase)
                signal, label, pair = _image_and_label(pair, config.imaging, rng)
                heating_jump(data, rng, config.imaging.data_heating_quanta_per_round)
                rec.signals.append(signal)
                rec.ancilla_labels.append(label)
                rec.events.extend(pair.events)
            rec.data_lost = data.lost
            rec.data_label = _electronic_label(data)
            rec.data_n = None if data.lost else _born_motional_n(data, rng)
            return rec

        records.extend(_map_shots(one_shot, config.shots, config.workers))
    return records


def run_loss_detection(config: ProtocolConfig, analyzer_phases=None, reference: bool = False):
    """Coherence-preserving loss detection via motional shelving.

    Sequence per shot: shelve the data superposition into the motional
    manifold (blue sideband through the dynamics engine), CNOT block,
    image the ancilla (the data atom is exposed to the imaging light:
    unshelved ground-state population is removed), unshelve, analyzer
    pi/2 pulse of the scanned phase, projective readout of the data.

    With reference=True the entangling gate and the imaging exposure are
    skipped (drive blocked), giving the idle-sequence fringe.

    Returns (records, fringe) where fringe maps scenario -> (phases,
    up-fraction, stderr).
    """
    if analyzer_phases is None:
        analyzer_phases = config.analyzer_phases
    analyzer_phases = np.asarray(analyzer_phases, dtype=float)
    records = []
    fringe = {}
    for scenario in config.scenarios:
        s_idx = SCENARIOS.index(scenario)
        up_fraction = np.zeros(analyzer_phases.size)
        for k, phi in enumerate(analyzer_phases):

            def one_shot(i, scenario=scenario, s_idx=s_idx, k=k, phi=phi):
                rng = shot_rng(config.seed, s_idx, k, i)
                ctx = ShotContext.fresh(rng, config.gate_errors)
                if scenario == "present":
                    data = _prepare_data(config, rng)
                    data = _apply_shelving(data, config, rng, invert=False)
                else:
                    data = HybridAtomState.absent(config.n_max)
                anc = _fresh_ancilla(config, rng)
                pair = AtomPair(data=data, anc=anc)
                cnot_block(
                    pair, ctx, config.comp_phase, config.local_z_phase,
                    entangle=not reference,
                )
                rec = ShotRecord(scenario=scenario, shot=i, extra={"phase": float(phi)})
                data = pair.data
                if reference:
                    signal, label = float("nan"), _electronic_label(pair.anc)
                else:
                    signal, label, pair = _image_and_label(pair, config.imaging, rng)
                    data = pair.data
                    if not data.lost:
                        expose_to_imaging(data, config.imaging, rng)
                rec.signals.append(signal)
                rec.ancilla_labels.append(label)
                rec.events.extend(pair.events)
                if not data.lost:
                    data = _apply_shelving(data, config, rng, invert=True)
                    apply_rotation(data, phi, np.pi / 2, ctx.errors, rng, ctx.rotation_jitter)
                    p_down = data.population(ElectronicLevel.DOWN)
                    level = (
                        ElectronicLevel.DOWN if rng.uniform() < p_down else ElectronicLevel.UP
                    )
                    rec.data_label = "down" if level == ElectronicLevel.DOWN else "up"
                else:
                    rec.data_label = "lost"
                rec.data_lost = data.lost
                return rec

            batch = _map_shots(one_shot, config.shots, config.workers)
            records.extend(batch)
            up_fraction[k] = np.mean([r.data_label == "up" for r in batch])
        stderr = np.sqrt(np.clip(up_fraction * (1 - up_fraction), 1e-12, None) / config.shots)
        fringe[scenario] = (analyzer_phases.copy(), up_fraction, stderr)
    return records, fringe


def run_algorithmic_cooling(config: ProtocolConfig):
    """One round of algorithmic cooling on a thermal data atom.

    Returns (records, summary); the summary holds the measured
    ground-state fraction, the fraction conditioned on the correct
    (clock) electronic state, the wrong-state fraction, and the ideal
    one-quantum-removal reference for the configured nbar.
    """
    rsb = ideal_rsb_map(config.n_max) if config.ideal_cooling_rsb else None
    omega10 = sideband_rabi(1, 0, config.trap.eta, config.rabi)

    def one_shot(i):
        rng = shot_rng(config.seed, 0, i)
        ctx = ShotContext.fresh(rng, config.gate_errors)
        motional = (
            ThermalSpec(nbar=config.data_nbar, n_max=config.n_max)
            if config.data_nbar > 0
            else 0
        )
        data = prepare_state(ElectronicLevel.DOWN, motional, n_max=config.n_max, rng=rng)
        n_init = int(np.argmax(data.motional_distribution()))  # Fock-definite
        anc = _fresh_ancilla(config, rng, level=ElectronicLevel.DOWN)
        pair = AtomPair(data=data, anc=anc)
        if rsb is not None:
            cooling_circuit(pair, ctx, rsb)
        else:
            if not data.lost:
                pulse = PulseSpec(
                    PulseKind.RED_SIDEBAND, rabi=config.rabi, duration=np.pi / omega10
                )
                realization = None
                if config.noise is not None:
                    dt = pulse.duration / config.steps_per_pulse
                    realization = sample_noise(config.noise, pulse.duration, dt, rng)
                pair.data.amps = evolve(data, pulse, config.trap, realization).amps
            cooling_circuit(pair, ctx, np.eye(2 * (config.n_max + 1)).reshape(
                2, config.n_max + 1, 2, config.n_max + 1
            ))
        rec = ShotRecord(scenario="present", shot=i, extra={"n_init": n_init})
        rec.events.extend(pair.events)
        outcome = pair.measure_data(rng)
        data, anc = pair.data, pair.anc
        rec.data_lost = data.lost
        if outcome is None:
            rec.data_label, rec.data_n = "lost", None
        else:
            level, n_f = outcome
            rec.data_label = "down" if level == ElectronicLevel.DOWN else "up"
            rec.data_n = n_f
        if not anc.lost:
            # reduced electronic overlap with the plus-convention state
            vec = np.conjugate(ANC_PLUS) @ anc.amps
            overlap_plus = float(np.sum(np.abs(vec) ** 2))
            rec.ancilla_labels.append("plus" if overlap_plus > 0.5 else "minus")
            rec.extra["anc_overlap_plus"] = overlap_plus
        else:
            rec.ancilla_labels.append("lost")
        return rec

    records = _map_shots(one_shot, config.shots, config.workers)
    kept = [r for r in records if not r.data_lost]
    n_up = [r for r in kept if r.data_label == "up"]
    q = config.data_nbar / (config.data_nbar + 1.0)
    summary = {
        "shots": config.shots,
        "survivors": len(kept),
        "ground_state_fraction": float(np.mean([r.data_n == 0 for r in kept])) if kept else 0.0,
        "ground_state_fraction_correct_state": (
            float(np.mean([r.data_n == 0 for r in n_up])) if n_up else 0.0
        ),
        "wrong_state_fraction": float(np.mean([r.data_label == "down" for r in kept]))
        if kept
        else 0.0,
        "ideal_ground_state_fraction": 1.0 - q**2,
        "initial_ground_state_fraction": 1.0 - q,
    }
    return records, summary


def calibrate_phase(config: ProtocolConfig, phases=None):
    """Deterministic phase scan of the compensated ancilla rotation.

    Returns a dict with the scanned phases, the ancilla ground-state
    population per scenario, and the largest deviation of the data-atom
    state across the scan (zero for an ideal local-Z implementation).
    """
    if phases is None:
        phases = config.analyzer_phases
    phases = np.asarray(phases, dtype=float)
    p_down = {}
    data_dev = 0.0
    for scenario in config.scenarios:
        vals = np.zeros(phases.size)
        ref_amps = None
        for k, phi in enumerate(phases):
            if scenario == "present":
                data = prepare_state(ElectronicLevel.UP, 0, n_max=config.n_max)
            else:
                data = HybridAtomState.absent(config.n_max)
            anc = prepare_state(ElectronicLevel.UP, 0, n_max=config.n_max)
            pair = AtomPair(data=data, anc=anc)
            ctx = ShotContext(rng=None, errors=None)
            cnot_block(pair, ctx, comp_phase=phi, local_z_phase=config.local_z_phase)
            pops = pair.anc_electronic_populations()
            vals[k] = pops[0]
            if scenario == "present":
                if ref_amps is None:
                    ref_amps = pair.data.amps.copy()
                else:
                    data_dev = max(data_dev, float(np.max(np.abs(pair.data.amps - ref_amps))))
        p_down[scenario] = vals
    return {"phases": phases, "p_down": p_down, "data_state_deviation": data_dev}


# ---------------------------------------------------------------------------
# sideband spectroscopy (semi-analytic ladder model)


def detuned_transfer(omega: float, delta: float, duration: float) -> float:
    """Two-level transfer probability at coupling omega and detuning delta."""
    w_eff = math.sqrt(omega * omega + delta * delta)
    if w_eff == 0.0:
        return 0.0
    return (omega / w_eff) ** 2 * math.sin(w_eff * duration / 2.0) ** 2


def simulate_sideband_spectrum(
    initial_dist,
    detunings_hz,
    trap: TrapSpec = None,
    rabi: float = 2 * np.pi * 2e3,
    duration: float = None,
    shots_per_point: int = None,
    rng=None,
    include_carrier: bool = False,
    wrong_state_fraction: float = 0.0,
) -> SidebandSpectrum:
    """Sideband spectrum of a motional population distribution.

    For each detuning from the carrier the excitation probability is the
    population-weighted sum of detuned-Rabi transfers on the resolved
    red and blue sideband ladders (Laguerre-scaled couplings); the probe
    duration defaults to the 0<->1 pi time so t01 = 1. With
    shots_per_point the curve is binomially sampled, otherwise exact
    values with zero stderr are returned (infinite-shots mode). A
    nonzero wrong_state_fraction w rescales the curve to (1-w) p + w,
    modeling population removed by the pre-thermometry pushout.
    """
    if trap is None:
        trap = DEFAULT_TRAP
    dist = np.asarray(initial_dist, dtype=float)
    if abs(dist.sum() - 1.0) > 1e-9 or np.any(dist < -1e-12):
        raise ValidationError("initial_dist must be a probability vector")
    if not 0.0 <= wrong_state_fraction < 1.0:
        raise ValidationError("wrong_state_fraction must be in [0, 1)")
    if duration is None:
        duration = spectroscopy_pi_duration(trap.eta, rabi)
    detunings_hz = np.asarray(detunings_hz, dtype=float)
    n_max = dist.size - 1
    f_trap = trap.omega_t / (2 * np.pi)

    blue = np.array([sideband_rabi(n, n + 1, trap.eta, rabi) for n in range(n_max)])
    red = np.array([sideband_rabi(n, n - 1, trap.eta, rabi) for n in range(1, n_max + 1)])
    carrier = np.array([sideband_rabi(n, n, trap.eta, rabi) for n in range(n_max + 1)])

    p_exc = np.zeros(detunings_hz.size)
    for i, f in enumerate(detunings_hz):
        total = 0.0
        d_blue = 2 * np.pi * (f - f_trap)
        d_red = 2 * np.pi * (f + f_trap)
        d_car = 2 * np.pi * f
        for n in range(n_max + 1):
            if dist[n] == 0.0:
                continue
            t = 0.0
            if n < n_max:
                t += detuned_transfer(blue[n], d_blue, duration)
            if n >= 1:
                t += detuned_transfer(red[n - 1], d_red, duration)
            if include_carrier:
                t += detuned_transfer(carrier[n], d_car, duration)
            total += dist[n] * min(t, 1.0)
        p_exc[i] = min(total, 1.0)
    p_exc = (1.0 - wrong_state_fraction) * p_exc + wrong_state_fraction

    if shots_per_point is None:
        stderr = np.full(p_exc.size, 1e-6)  # infinite-shots mode
        shots = np.full(p_exc.size, 0)
        measured = p_exc
    else:
        if rng is None:
            raise ValidationError("binomial sampling requires an rng")
        counts = rng.binomial(shots_per_point, p_exc)
        measured = counts / shots_per_point
        stderr = np.sqrt(np.clip(measured * (1 - measured), 1e-12, None) / shots_per_point)
        shots = np.full(p_exc.size, shots_per_point)
    return SidebandSpectrum(
        detuning_hz=detunings_hz,
        p_exc=measured,
        stderr=stderr,
        shots=shots,
        duration=duration,
        rabi=rabi,
        eta=trap.eta,
        side="both",
    )


def sideband_peak_ratio(dist, trap: TrapSpec = None, rabi: float = 2 * np.pi * 2e3,
                        duration: float = None) -> float:
    """Exact resonant-ladder ratio of cooling to heating peak heights.

    Sums the on-resonance transfers of each sideband family; the flat
    far-detuned tail of the opposite sideband is excluded, matching what
    a peak fit above a floating background measures. For a thermal
    distribution this ratio equals the Boltzmann ratio q identically.
    """
    if trap is None:
        trap = DEFAULT_TRAP
    dist = np.asarray(dist, dtype=float)
    n_max = dist.size - 1
    if duration is None:
        duration = spectroscopy_pi_duration(trap.eta, rabi)
    e_red = sum(
        dist[n] * detuned_transfer(sideband_rabi(n, n - 1, trap.eta, rabi), 0.0, duration)
        for n in range(1, n_max + 1)
    )
    e_blue = sum(
        dist[n] * detuned_transfer(sideband_rabi(n, n + 1, trap.eta, rabi), 0.0, duration)
        for n in range(n_max)
    )
    return float(e_red / e_blue)
