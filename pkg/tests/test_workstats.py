import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from qcwork.classical import cf_classical_closed
from qcwork.errors import ConsistencyError, InvalidDimensionError, TruncationError
from qcwork.operators import (
    DriveProtocol,
    build_hamiltonian,
    displaced_thermal,
    evolve,
    thermal_state,
)
from qcwork.workstats import (
    DEFINITIONS,
    CharacteristicSamples,
    JarzynskiReport,
    WorkQuasiDistribution,
    cf_fcs,
    cf_mh,
    cf_tpm,
    characteristic,
    energy_change,
    jarzynski_check,
    jarzynski_dimension,
    moments_from_cf,
    quasi_distribution,
    reverse_final_state,
    spectral_setup,
)


def literal_cf(definition, rho, H0, Ht, U, eta):
    """Matrix-exponential oracle for the three trace formulas."""
    rho, H0, Ht, U = (np.asarray(a) for a in (rho, H0, Ht, U))
    ef = expm(1j * eta * Ht)
    e0 = expm(-1j * eta * H0)
    if definition == "TPM":
        inner = e0 @ rho
    elif definition == "FCS":
        h = expm(-0.5j * eta * H0)
        inner = h @ rho @ h
    else:
        inner = 0.5 * (e0 @ rho + rho @ e0)
    return np.trace(ef @ U @ inner @ U.conj().T)


class TestTypes:
    def test_cf_normalization_gate(self):
        with pytest.raises(ConsistencyError):
            CharacteristicSamples("FCS", [0.0], [1.001])

    def test_cf_symmetry_gate(self):
        with pytest.raises(ConsistencyError):
            CharacteristicSamples("MH", [-1.0, 1.0], [0.5 + 0.1j, 0.5 + 0.1j])

    def test_cf_unknown_tag(self):
        with pytest.raises(ValueError):
            CharacteristicSamples("XYZ", [1.0], [1.0])

    def test_cf_length_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            CharacteristicSamples("TPM", [0.0, 1.0], [1.0])

    def test_distribution_sum_gate(self):
        with pytest.raises(ConsistencyError):
            WorkQuasiDistribution("MH", [0.0, 1.0], [0.5, 0.6], 1e-6)

    def test_tpm_positivity_gate(self):
        with pytest.raises(ConsistencyError):
            WorkQuasiDistribution("TPM", [0.0, 1.0], [1.1, -0.1], 1e-6)
        WorkQuasiDistribution("FCS", [0.0, 1.0], [1.1, -0.1], 1e-6)

    def test_distribution_sorted(self):
        d = WorkQuasiDistribution("FCS", [2.0, -1.0, 0.5], [0.2, 0.5, 0.3], 1e-6)
        np.testing.assert_array_equal(d.support, [-1.0, 0.5, 2.0])
        np.testing.assert_array_equal(d.weights, [0.5, 0.3, 0.2])

    def test_report_discrepancy(self):
        r = JarzynskiReport("FCS", 1.0, 0.75, 0.0, discrepancy=123.0)
        assert r.discrepancy == 0.25
        assert not r.passed()
        assert JarzynskiReport("CLASSICAL", 1.0, 0.99, 0.0, 0.0, stderr=0.004).passed()


class TestCharacteristic:
    @pytest.mark.parametrize("definition", DEFINITIONS)
    def test_origin(self, fig1_setup, definition):
        cf = characteristic(fig1_setup, definition, [0.0])
        assert abs(cf.values[0] - 1) < 1e-10

    @pytest.mark.parametrize("definition", ["FCS", "MH"])
    @pytest.mark.parametrize("eta", [-2.5, 0.7, 3.1])
    def test_matches_literal_trace(self, fig1_ops, fig1_setup, definition, eta):
        rho, H0, Ht, U = fig1_ops
        ref = literal_cf(definition, rho, H0, Ht, U, eta)
        assert abs(characteristic(fig1_setup, definition, [eta]).values[0] - ref) < 1e-10

    @pytest.mark.parametrize("eta", [-1.0, 2.0])
    def test_tpm_literal_for_diagonal_state(self, thermal_ops, eta):
        _, ops = thermal_ops
        ref = literal_cf("TPM", *ops, eta)
        assert abs(cf_tpm(*ops, [eta]).values[0] - ref) < 1e-10

    def test_wrappers(self, fig1_ops, fig1_setup):
        etas = [0.5, 1.5]
        for fn, d in ((cf_tpm, "TPM"), (cf_fcs, "FCS"), (cf_mh, "MH")):
            np.testing.assert_array_equal(fn(*fig1_ops, etas).values,
                                          characteristic(fig1_setup, d, etas).values)

    def test_conjugate_symmetry(self, fig1_setup, etas):
        for d in DEFINITIONS:
            v = characteristic(fig1_setup, d, etas).values
            assert np.abs(v - v[::-1].conj()).max() < 1e-10

    def test_definitions_collapse_without_coherence(self, thermal_ops, etas):
        _, ops = thermal_ops
        setup = spectral_setup(*ops)
        cfs = [characteristic(setup, d, etas) for d in DEFINITIONS]
        assert cfs[0].max_deviation(cfs[1]) < 1e-10
        assert cfs[0].max_deviation(cfs[2]) < 1e-10

    def test_definitions_differ_with_coherence(self, fig1_setup, etas):
        tpm, fcs, mh = (characteristic(fig1_setup, d, etas) for d in DEFINITIONS)
        assert tpm.max_deviation(fcs) > 1e-3 and fcs.max_deviation(mh) > 1e-3

    def test_no_drive_tpm_is_one(self, fig1, etas):
        p = fig1.replace(u=0.0, tau_prime=0.0)
        N = 60
        ops = (thermal_state(p, 0, N), build_hamiltonian(p, 0, N),
               build_hamiltonian(p, p.tau, N), evolve(p, 0, p.tau, N))
        assert np.abs(cf_tpm(*ops, etas).values - 1).max() < 1e-12

    def test_dimension_mismatch(self, fig1_ops):
        rho, H0, Ht, U = fig1_ops
        with pytest.raises(InvalidDimensionError):
            cf_fcs(rho, H0, np.asarray(Ht)[:10, :10], U, [1.0])

    def test_classical_tag_rejected(self, fig1_setup):
        with pytest.raises(ValueError):
            characteristic(fig1_setup, "CLASSICAL", [1.0])


class TestMoments:
    def test_fcs_first_moment_is_energy_change(self, fig1_ops, fig1_setup):
        dE = energy_change(*fig1_ops)
        dist = quasi_distribution(*fig1_ops, "FCS", setup=fig1_setup)
        assert abs(dist.moment(1) - dE) < 1e-8
        cf_mom = moments_from_cf(lambda z: characteristic(fig1_setup, "FCS", z).values)
        assert abs(cf_mom[1] - dE) < 1e-8

    def test_fcs_mh_first_two_agree(self, fig1_ops, fig1_setup):
        F = quasi_distribution(*fig1_ops, "FCS", setup=fig1_setup)
        M = quasi_distribution(*fig1_ops, "MH", setup=fig1_setup)
        for k in (1, 2):
            assert abs(F.moment(k) - M.moment(k)) < 1e-8

    def test_third_moments_differ(self, fig1_ops, fig1_setup):
        F = quasi_distribution(*fig1_ops, "FCS", setup=fig1_setup)
        M = quasi_distribution(*fig1_ops, "MH", setup=fig1_setup)
        assert abs(F.moment(3) - M.moment(3)) > 1e-3

    def test_contour_moments_match_sums(self, fig1_ops, fig1_setup):
        for d in DEFINITIONS:
            dist = quasi_distribution(*fig1_ops, d, setup=fig1_setup)
            cm = moments_from_cf(lambda z, d=d: characteristic(fig1_setup, d, z).values)
            for k in (1, 2, 3):
                assert cm[k].real == pytest.approx(dist.moment(k), rel=1e-9)
                assert abs(cm[k].imag) < 1e-9

    def test_contour_moments_of_gaussian(self, fig1):
        cm = moments_from_cf(lambda z: cf_classical_closed(z, fig1).values)
        mean, var = math.cos(1) - math.cos(3), 2 * (1 - math.cos(2))
        assert cm[1].real == pytest.approx(mean, abs=1e-12)
        assert cm[2].real - cm[1].real ** 2 == pytest.approx(var, abs=1e-10)


class TestQuasiDistribution:
    @pytest.mark.parametrize("definition", DEFINITIONS)
    def test_integrity(self, fig1_ops, fig1_setup, etas, definition):
        dist = quasi_distribution(*fig1_ops, definition, setup=fig1_setup)
        assert abs(dist.total - 1) < 1e-10
        assert dist.imag_residual < 1e-10
        direct = characteristic(fig1_setup, definition, etas)
        assert dist.characteristic(etas).max_deviation(direct) < 1e-8

    def test_tpm_nonnegative(self, fig1_ops, fig1_setup):
        assert quasi_distribution(*fig1_ops, "TPM", setup=fig1_setup).min_weight >= -1e-12

    @pytest.mark.parametrize("definition", ["FCS", "MH"])
    def test_negativity(self, fig1_ops, fig1_setup, definition):
        dist = quasi_distribution(*fig1_ops, definition, setup=fig1_setup)
        assert dist.min_weight < 0 and dist.negativity_count > 0

    def test_fcs_half_spacing(self, fig1_ops, fig1_setup):
        dist = quasi_distribution(*fig1_ops, "FCS", setup=fig1_setup)
        # levels of the truncated H(tau) near the cutoff carry no weight
        frac = dist.support[np.abs(dist.weights) > 1e-12] / 0.5
        offsets = frac - np.round(frac)
        assert np.abs(offsets - offsets[0]).max() < 1e-6

    def test_no_drive_single_point(self, fig1):
        p = fig1.replace(u=0.0, tau_prime=0.0)
        N = 40
        ops = (thermal_state(p, 0, N), build_hamiltonian(p, 0, N),
               build_hamiltonian(p, p.tau, N), evolve(p, 0, p.tau, N))
        dist = quasi_distribution(*ops, "TPM")
        kept = np.abs(dist.weights) > 1e-14
        assert dist.support[kept] == pytest.approx([0.0], abs=1e-9)
        assert dist.weights[kept] == pytest.approx([1.0], abs=1e-12)

    def test_merge_tol_bounds(self, fig1_ops):
        with pytest.raises(ValueError):
            quasi_distribution(*fig1_ops, "MH", merge_tol=0.2)
        with pytest.raises(ValueError):
            quasi_distribution(*fig1_ops, "MH", merge_tol=0.0)

    def test_imaginary_residual_raises(self, fig1_ops, fig1_setup):
        import qcwork.workstats as ws
        bad = ws.SpectralSetup(fig1_setup.e0, fig1_setup.et, fig1_setup.ut,
                               fig1_setup.r + 1e-3j * np.eye(fig1_setup.dim), fig1_setup.v0)
        with pytest.raises(ConsistencyError):
            quasi_distribution(*fig1_ops, "FCS", setup=bad)


@settings(max_examples=15, deadline=None)
@given(tau_prime=st.floats(0.0, 2.0), tau=st.floats(0.3, 3.0), u=st.floats(-1.0, 1.0),
       beta=st.floats(0.7, 2.0))
def test_distribution_properties(tau_prime, tau, u, beta):
    p = DriveProtocol(tau_prime=tau_prime, tau=tau, u=u, beta=beta)
    N = 60
    ops = (displaced_thermal(p, N), build_hamiltonian(p, 0, N),
           build_hamiltonian(p, tau, N), evolve(p, 0, tau, N))
    setup = spectral_setup(*ops)
    etas = np.linspace(-3, 3, 13)
    for d in DEFINITIONS:
        dist = quasi_distribution(*ops, d, setup=setup)
        assert abs(dist.total - 1) < 1e-10
        assert dist.characteristic(etas).max_deviation(characteristic(setup, d, etas)) < 1e-8
    F = quasi_distribution(*ops, "FCS", setup=setup)
    assert abs(F.moment(1) - energy_change(*ops)) < 1e-8


class TestReverse:
    def test_no_drive_thermal(self, fig1):
        p = fig1.replace(u=0.0)
        rho = reverse_final_state(p, 40)
        assert np.abs(rho.matrix - thermal_state(p, p.tau, 40).matrix).max() < 1e-12

    def test_valid_state(self, fig1):
        rho = reverse_final_state(fig1, 80)
        assert np.abs(rho.matrix - rho.matrix.conj().T).max() < 1e-10
        assert abs(np.trace(rho.matrix).real - 1) < 1e-10

    def test_reverse_ends_near_origin_well(self, fig1):
        # reversed drive moves the well from u tau back to 0
        from qcwork.operators import quadratures
        rho = reverse_final_state(fig1, 80)
        x, _ = quadratures(80, fig1)
        assert abs(rho.expectation(x)) < 2.0


class TestJarzynski:
    def test_dimension(self, fig1):
        N = jarzynski_dimension(fig1)
        assert N == 32
        q_top = (1 - math.exp(-1)) * math.exp(-(N - 1))
        assert q_top >= 1e-14 > q_top * math.exp(-1)

    @pytest.mark.parametrize("definition", DEFINITIONS)
    def test_thermal_unity(self, fig1, definition):
        p = fig1.replace(tau_prime=0.0)
        N = jarzynski_dimension(p)
        r = jarzynski_check(displaced_thermal(p, N, check_tail=False), p, definition)
        assert abs(r.lhs - 1) < 1e-8 and abs(r.rhs - 1) < 1e-8
        assert r.passed()

    @pytest.mark.parametrize("definition", DEFINITIONS)
    def test_coherent(self, fig1, definition):
        N = jarzynski_dimension(fig1)
        r = jarzynski_check(displaced_thermal(fig1, N, check_tail=False), fig1, definition)
        assert r.discrepancy < 1e-8
        assert abs(r.delta_f) < 1e-7
        assert r.truncation_tail is not None

    def test_coherent_values_differ_from_one(self, fig1):
        N = jarzynski_dimension(fig1)
        rho = displaced_thermal(fig1, N, check_tail=False)
        vals = [jarzynski_check(rho, fig1, d).lhs for d in ("FCS", "MH")]
        assert all(abs(v - 1) > 0.1 for v in vals)

    def test_ill_conditioned(self, fig1):
        N = jarzynski_dimension(fig1) + 8
        with pytest.raises(TruncationError) as info:
            jarzynski_check(displaced_thermal(fig1, N, check_tail=False), fig1, "FCS")
        assert info.value.required_dim == jarzynski_dimension(fig1)

    def test_sliced_propagator_path(self, fig1):
        N = jarzynski_dimension(fig1)
        r = jarzynski_check(displaced_thermal(fig1, N, check_tail=False), fig1, "MH", steps=400)
        assert r.discrepancy < 1e-8
