import numpy as np
import pytest

from deepenergy.hyperelastic import DEFAULT_HYPER, first_pk_stress
from deepenergy.oracles import (
    OracleError,
    shear_oracle,
    sls_exact_relaxation,
    sls_oracle,
    uniaxial_oracle,
    uniaxial_strain_hyper_oracle,
)
from deepenergy.viscoelastic import ViscoParams


class TestUniaxial:
    @pytest.mark.parametrize("stretch", [1.125, 1.25, 1.375, 1.5])
    def test_lateral_faces_traction_free(self, stretch):
        r = uniaxial_oracle(stretch)
        assert abs(r.extra["P22"]) <= 1e-10
        P = first_pk_stress(np.diag([stretch, r.aux, r.aux]))
        assert abs(P[2, 2]) <= 1e-9

    def test_known_values(self):
        r = uniaxial_oracle(1.5)
        assert r.stress == pytest.approx(14.637298, rel=1e-6)
        assert r.aux == pytest.approx(0.829650, rel=1e-6)

    def test_small_strain_youngs_modulus(self):
        eps = 1e-4
        r = uniaxial_oracle(1.0 + eps)
        assert r.stress / eps == pytest.approx(DEFAULT_HYPER.youngs_modulus, rel=1e-2)

    def test_small_strain_matches_tangent_moduli(self):
        # moduli from the stress response itself rather than the lam + 2mu/3 estimate
        e = 1e-7
        K = np.trace(first_pk_stress(np.eye(3) * (1 + e))) / (9 * e)
        G = DEFAULT_HYPER.shear_modulus
        r = uniaxial_oracle(1.0 + 1e-7)
        assert r.stress / 1e-7 == pytest.approx(9 * K * G / (3 * K + G), rel=1e-5)

    def test_monotone_response(self):
        s = [uniaxial_oracle(1 + d).stress for d in np.linspace(0.05, 0.5, 10)]
        assert np.all(np.diff(s) > 0)

    def test_invalid_stretch(self):
        with pytest.raises(OracleError):
            uniaxial_oracle(-1.0)

    def test_confined_stretch(self):
        r = uniaxial_strain_hyper_oracle(1.2)
        assert r.stress == pytest.approx(first_pk_stress(np.diag([1.2, 1.0, 1.0]))[0, 0])


class TestShear:
    def test_closed_form(self):
        assert shear_oracle(0.5).stress == pytest.approx(7.159043, abs=1e-6)

    def test_linear_regime(self):
        assert shear_oracle(1e-5).stress / 1e-5 == pytest.approx(14.58, rel=1e-6)


class TestSLS:
    def test_self_convergence(self):
        times = [0.05 * k for k in range(1, 41)]
        strains = [0.03 * min(t, 2 - t) for t in times]
        coarse = sls_oracle(times, strains, substeps=20)
        fine = sls_oracle(times, strains, substeps=40)
        assert max(abs(a.stress - b.stress) for a, b in zip(coarse, fine)) <= 1e-9

    def test_ramp_peak(self):
        times = [0.05 * k for k in range(1, 21)]
        out = sls_oracle(times, [0.03 * t for t in times])
        # peak stress of a linear ramp at default constants
        assert out[-1].stress == pytest.approx(0.18647, abs=1e-5)

    def test_exact_relaxation_limits(self):
        assert sls_exact_relaxation(0.0, 0.03) == pytest.approx(0.30)
        assert sls_exact_relaxation(50.0, 0.03) == pytest.approx(0.10)

    def test_fast_rise_matches_exact_relaxation(self):
        rise = 1e-5
        times = [rise] + [rise + 0.1 * k for k in range(1, 31)]
        out = sls_oracle(times, [0.03] * len(times))
        for r in out:
            assert r.stress == pytest.approx(sls_exact_relaxation(r.extra["time"] - rise / 2, 0.03), abs=1e-6)

    def test_uniaxial_stress_mode_is_laterally_free(self):
        times = [0.1 * k for k in range(1, 11)]
        out = sls_oracle(times, [0.01 * t for t in times], mode="uniaxial-stress")
        from deepenergy.viscoelastic import cauchy_stress

        for r in out:
            assert abs(cauchy_stress(r.extra["eps"], r.aux)[1, 1]) <= 1e-12

    def test_distinct_rates(self):
        p = ViscoParams(omega_K=0.5, omega_J=4.0)
        rise = 1e-6
        times = [rise] + [rise + 0.25 * k for k in range(1, 9)]
        out = sls_oracle(times, [0.02] * len(times), p)
        for r in out:
            assert r.stress == pytest.approx(sls_exact_relaxation(r.extra["time"], 0.02, p), abs=2e-6)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            sls_oracle([1.0], [0.01], mode="biaxial")
