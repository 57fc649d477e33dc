import numpy as np
import pytest

from tweezersim.analysis import optimize_threshold, optimize_threshold_analytic
from tweezersim.errors import ValidationError
from tweezersim.gates import (
    AtomPair,
    GateErrorSpec,
    ImagingSpec,
    apply_cz,
    apply_local_z,
    apply_rotation,
    calibrate_imaging,
    expose_to_imaging,
    heating_jump,
    image,
    image_pair_ancilla,
    pair_rotation,
    projective_measure,
    pushout,
    rotation_matrix,
)
from tweezersim.states import ElectronicLevel, HybridAtomState, prepare_state

N_MAX = 4


def _pair(data_level=ElectronicLevel.UP, anc_level=ElectronicLevel.UP):
    return AtomPair(
        data=prepare_state(data_level, 0, n_max=N_MAX),
        anc=prepare_state(anc_level, 0, n_max=N_MAX),
    )


def _kron_state(pair):
    """Joint-space vector oracle from a product pair."""
    return np.kron(pair.data.amps.reshape(-1), pair.anc.amps.reshape(-1))


def _kron_cz(n_max):
    m = n_max + 1
    diag = np.ones((2, m, 2, m))
    diag[1, :, 1, :] = -1.0
    return np.diag(diag.reshape(-1))


class TestRotations:
    def test_pi_flip(self):
        s = prepare_state(ElectronicLevel.DOWN, 0, n_max=N_MAX)
        apply_rotation(s, 0.0, np.pi)
        assert s.population(ElectronicLevel.UP) == pytest.approx(1.0, abs=1e-12)

    def test_half_then_inverse_is_identity(self):
        s = prepare_state(np.array([0.6, 0.8]), 2, n_max=N_MAX)
        ref = s.amps.copy()
        apply_rotation(s, 0.0, np.pi / 2)
        apply_rotation(s, 0.0, -np.pi / 2)
        np.testing.assert_allclose(s.amps, ref, atol=1e-12)

    def test_unitary_any_axis(self):
        for theta, phi in [(0.3, 0.0), (np.pi / 2, 1.1), (2.2, 4.0)]:
            r = rotation_matrix(theta, phi)
            np.testing.assert_allclose(r @ r.conj().T, np.eye(2), atol=1e-14)

    def test_virtual_z_composition_matches_matrix_oracle(self):
        # rotation sandwich with offset phases equals the 2x2 product oracle
        theta, phi1, phi2 = np.pi / 2, 0.4, 1.7
        oracle = rotation_matrix(theta, phi2) @ rotation_matrix(theta, phi1)
        s = prepare_state(ElectronicLevel.DOWN, 0, n_max=N_MAX)
        apply_rotation(s, phi1, theta)
        apply_rotation(s, phi2, theta)
        np.testing.assert_allclose(s.amps[:, 0], oracle @ np.array([1.0, 0.0]), atol=1e-12)

    def test_shot_jitter_is_reused(self):
        errors = GateErrorSpec(sq_over_rotation_sigma=0.1)
        rng = np.random.default_rng(0)
        s1 = prepare_state(ElectronicLevel.DOWN, 0, n_max=N_MAX)
        apply_rotation(s1, 0.0, np.pi, errors=errors, rng=rng, shot_jitter=0.05)
        s2 = prepare_state(ElectronicLevel.DOWN, 0, n_max=N_MAX)
        apply_rotation(s2, 0.0, np.pi + 0.05)
        np.testing.assert_allclose(s1.amps, s2.amps, atol=1e-12)


class TestLocalZ:
    def test_identity_at_zero(self):
        s = prepare_state(np.array([1, 1]) / np.sqrt(2), 0, n_max=N_MAX)
        ref = s.amps.copy()
        apply_local_z(s, 0.0)
        np.testing.assert_array_equal(s.amps, ref)

    def test_pi_flips_superposition_sign(self):
        s = prepare_state(np.array([1, 1]) / np.sqrt(2), 0, n_max=N_MAX)
        apply_local_z(s, np.pi)
        assert s.amps[1, 0] == pytest.approx(-1 / np.sqrt(2), abs=1e-12)
        assert s.amps[0, 0] == pytest.approx(1 / np.sqrt(2), abs=1e-12)

    def test_phase_additivity(self):
        s1 = prepare_state(np.array([0.6, 0.8j]), 1, n_max=N_MAX)
        s2 = s1.copy()
        apply_local_z(s1, 0.7)
        apply_local_z(s1, 1.1)
        apply_local_z(s2, 1.8)
        np.testing.assert_allclose(s1.amps, s2.amps, atol=1e-12)


class TestCZ:
    @pytest.mark.parametrize(
        "levels,sign",
        [
            ((ElectronicLevel.DOWN, ElectronicLevel.DOWN), 1),
            ((ElectronicLevel.DOWN, ElectronicLevel.UP), 1),
            ((ElectronicLevel.UP, ElectronicLevel.DOWN), 1),
            ((ElectronicLevel.UP, ElectronicLevel.UP), -1),
        ],
    )
    def test_truth_table(self, levels, sign):
        pair = _pair(*levels)
        ref = _kron_state(pair)
        apply_cz(pair)
        assert pair.is_product
        np.testing.assert_allclose(_kron_state(pair), sign * ref, atol=1e-12)

    def test_entangling_matches_kron_oracle(self):
        pair = AtomPair(
            data=prepare_state(np.array([0.6, 0.8]), 0, n_max=N_MAX),
            anc=prepare_state(np.array([1, 1j]) / np.sqrt(2), 1, n_max=N_MAX),
        )
        oracle = _kron_cz(N_MAX) @ _kron_state(pair)
        apply_cz(pair)
        assert not pair.is_product
        np.testing.assert_allclose(pair.joint.reshape(-1), oracle, atol=1e-12)

    def test_certain_loss_parameter(self):
        errors = GateErrorSpec(cz_phase_error_prob=0.0, cz_loss_prob=1.0)
        rng = np.random.default_rng(5)
        for _ in range(20):
            pair = _pair()
            apply_cz(pair, errors, rng)
            assert pair.data.lost or pair.anc.lost

    def test_vacuous_on_lost_atom(self):
        pair = AtomPair(
            data=HybridAtomState.absent(N_MAX),
            anc=prepare_state(np.array([1, 1]) / np.sqrt(2), 0, n_max=N_MAX),
        )
        ref = pair.anc.amps.copy()
        apply_cz(
            pair,
            GateErrorSpec(cz_phase_error_prob=0.0, cz_loss_prob=1.0),
            np.random.default_rng(0),
        )
        np.testing.assert_array_equal(pair.anc.amps, ref)
        assert "cz_skipped_lost_atom" in pair.events

    def test_z_error_branch_flags_event(self):
        errors = GateErrorSpec(cz_phase_error_prob=1.0, cz_loss_prob=0.0)
        pair = _pair()
        apply_cz(pair, errors, np.random.default_rng(1))
        assert any(e.startswith("cz_z_error") for e in pair.events)


class TestCNOTSandwich:
    """CZ sandwiched by compensated pi/2 rotations, against a 4x4 oracle."""

    def _block(self, pair, phi):
        pair_rotation(pair, "anc", 0.0, np.pi / 2)
        apply_cz(pair)
        pair_rotation(pair, "anc", phi, np.pi / 2)

    def test_phase_scan_sinusoid(self):
        phis = np.linspace(0, 2 * np.pi, 25)
        p_present = []
        p_absent = []
        for phi in phis:
            pair = _pair()
            self._block(pair, phi)
            p_present.append(pair.anc_electronic_populations()[0])
            pair = AtomPair(data=HybridAtomState.absent(N_MAX), anc=prepare_state(ElectronicLevel.UP, 0, n_max=N_MAX))
            self._block(pair, phi)
            p_absent.append(pair.anc_electronic_populations()[0])
        np.testing.assert_allclose(p_present, np.sin(phis / 2) ** 2, atol=1e-10)
        np.testing.assert_allclose(p_absent, np.cos(phis / 2) ** 2, atol=1e-10)

    def test_oracle_4x4(self):
        # electronic-subspace matrix product for the data-present block
        phi = 1.3
        r = rotation_matrix(np.pi / 2, 0.0)
        r2 = rotation_matrix(np.pi / 2, phi)
        cz = np.diag([1.0, 1.0, 1.0, -1.0])  # (dd, da, ud, uu) ordering (data, anc)
        block = np.kron(np.eye(2), r2) @ cz @ np.kron(np.eye(2), r)
        psi0 = np.kron([0, 1], [0, 1])  # both up
        out = block @ psi0
        pair = _pair()
        self._block(pair, phi)
        got = np.kron(pair.data.amps[:, 0], pair.anc.amps[:, 0])
        np.testing.assert_allclose(got, out, atol=1e-10)

    def test_full_cnot_maps_basis_correctly(self):
        # calibrated phase pi: (data up, anc up) -> anc down; absent -> anc up
        pair = _pair()
        self._block(pair, np.pi)
        assert pair.anc_electronic_populations()[0] == pytest.approx(1.0, abs=1e-10)
        pair = AtomPair(
            data=HybridAtomState.absent(N_MAX),
            anc=prepare_state(ElectronicLevel.UP, 0, n_max=N_MAX),
        )
        self._block(pair, np.pi)
        assert pair.anc_electronic_populations()[1] == pytest.approx(1.0, abs=1e-10)


class TestImaging:
    SPEC = ImagingSpec(bright_mean=4.0, dark_mean=0.0, bright_loss_prob=0.0)

    def test_absent_atom_draws_dark(self):
        rng = np.random.default_rng(2)
        sig = np.array(
            [image(HybridAtomState.absent(N_MAX), self.SPEC, rng)[0] for _ in range(4000)]
        )
        assert sig.mean() == pytest.approx(0.0, abs=0.06)
        assert sig.std() == pytest.approx(1.0, rel=0.05)

    def test_down_atom_survives_bright(self):
        rng = np.random.default_rng(3)
        s = prepare_state(ElectronicLevel.DOWN, 0, n_max=N_MAX)
        sig, s = image(s, self.SPEC, rng)
        assert not s.lost
        assert s.population(ElectronicLevel.DOWN) == pytest.approx(1.0)
        assert sig > 1.0

    def test_projection_collapses_electronic_only(self):
        rng = np.random.default_rng(4)
        mot = np.array([1, 1j]) / np.sqrt(2)
        counts = {"down": 0, "up": 0}
        for _ in range(2000):
            s = prepare_state(np.array([0.6, 0.8]), mot, n_max=N_MAX)
            _, s = image(s, self.SPEC, rng)
            label = "down" if s.population(ElectronicLevel.DOWN) > 0.5 else "up"
            counts[label] += 1
            np.testing.assert_allclose(s.motional_distribution()[:2], [0.5, 0.5], atol=1e-12)
        assert counts["down"] / 2000 == pytest.approx(0.36, abs=3 * np.sqrt(0.36 * 0.64 / 2000))

    def test_calibrated_fidelity_roundtrip(self):
        spec = calibrate_imaging(target_fidelity=0.90, p1=0.5, bright_loss_prob=0.0)
        rng = np.random.default_rng(8)
        n = 60_000
        bright = rng.normal(spec.bright_mean, spec.bright_std, n)
        dark = rng.normal(spec.dark_mean, spec.dark_std, n)
        res = optimize_threshold(bright, dark, p1=0.5)
        assert res.fidelity == pytest.approx(0.90, abs=0.005)

    def test_midpoint_threshold_closed_form(self):
        # symmetric distributions: F at the midpoint equals Phi(separation/2)
        from scipy.stats import norm

        spec = self.SPEC
        mid = (spec.bright_mean + spec.dark_mean) / 2
        f1 = 1 - norm.cdf(mid, spec.bright_mean, spec.bright_std)
        f0 = norm.cdf(mid, spec.dark_mean, spec.dark_std)
        sep = (spec.bright_mean - spec.dark_mean) / spec.bright_std
        assert 0.5 * (f1 + f0) == pytest.approx(norm.cdf(sep / 2), abs=1e-12)
        res = optimize_threshold_analytic(
            spec.bright_mean, spec.bright_std, spec.dark_mean, spec.dark_std, 0.5
        )
        assert res.threshold == pytest.approx(mid, abs=1e-9)

    def test_pair_imaging_collapses_entanglement(self):
        rng = np.random.default_rng(11)
        pair = AtomPair(
            data=prepare_state(np.array([0.6, 0.8]), 0, n_max=N_MAX),
            anc=prepare_state(ElectronicLevel.UP, 0, n_max=N_MAX),
        )
        pair_rotation(pair, "anc", 0.0, np.pi / 2)
        apply_cz(pair)
        assert not pair.is_product
        _, pair = image_pair_ancilla(pair, self.SPEC, rng)
        assert pair.is_product
        assert pair.data.norm_sq() == pytest.approx(1.0, abs=1e-10)


class TestChannels:
    def test_pushout_removes_down(self):
        rng = np.random.default_rng(6)
        s = prepare_state(ElectronicLevel.DOWN, 0, n_max=N_MAX)
        pushout(s, rng)
        assert s.lost

    def test_pushout_keeps_up(self):
        rng = np.random.default_rng(6)
        s = prepare_state(ElectronicLevel.UP, 2, n_max=N_MAX)
        pushout(s, rng)
        assert not s.lost
        assert s.population(ElectronicLevel.UP, 2) == pytest.approx(1.0)

    def test_pushout_born_statistics(self):
        rng = np.random.default_rng(7)
        shots = 100_000
        survived = 0
        for _ in range(shots):
            s = prepare_state(np.array([1, 1]) / np.sqrt(2), 0, n_max=N_MAX)
            pushout(s, rng)
            survived += not s.lost
        sigma = np.sqrt(0.25 / shots)
        assert survived / shots == pytest.approx(0.5, abs=3 * sigma)

    def test_expose_removes_unshelved_population(self):
        spec = ImagingSpec(bright_mean=4.0, unshelved_loss_prob=1.0)
        rng = np.random.default_rng(9)
        lost = 0
        shots = 5000
        for _ in range(shots):
            s = prepare_state(np.array([np.sqrt(0.2), np.sqrt(0.8)]), 0, n_max=N_MAX)
            expose_to_imaging(s, spec, rng)
            lost += s.lost
        assert lost / shots == pytest.approx(0.2, abs=3 * np.sqrt(0.2 * 0.8 / shots))

    def test_heating_jump_shifts_up(self):
        rng = np.random.default_rng(10)
        s = prepare_state(ElectronicLevel.UP, 1, n_max=N_MAX)
        heating_jump(s, rng, probability=1.0)
        assert s.population(n=2) == pytest.approx(1.0)

    def test_projective_measure_collapses(self):
        rng = np.random.default_rng(12)
        s = prepare_state(np.array([1, 1]) / np.sqrt(2), np.array([1, 1]) / np.sqrt(2), n_max=N_MAX)
        level, n = projective_measure(s, rng)
        assert s.population(level, n) == pytest.approx(1.0)


class TestSpecValidation:
    def test_imaging_spec_ordering(self):
        with pytest.raises(ValidationError):
            ImagingSpec(bright_mean=0.0, dark_mean=1.0)

    def test_gate_error_bounds(self):
        with pytest.raises(ValidationError):
            GateErrorSpec(cz_phase_error_prob=1.5)
        with pytest.raises(ValidationError):
            GateErrorSpec(cz_phase_error_prob=0.6, cz_loss_prob=0.6)
