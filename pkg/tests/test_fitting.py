import math

import numpy as np
import pytest

from hombench.coherence import CoherenceModel, EtalonConfig, etalon_convolve, \
    g1_fringe, spectrum_model
from hombench.core import (CorrelationCurve, DetectorModel, EmitterModel,
                           ExcitationConfig, Histogram, InterferometerModel)
from hombench.dynamics import cw_g2, pulsed_emission_profile
from hombench.fitting import (fit_fringe, fit_lifetime, fit_spectrum,
                              joint_hom_fit)
from hombench.hom import cw_hom_pair

EM_TRUE = EmitterModel(t1=1.75, r_cw=0.1, tau_c_prime=0.55, f_overlap=1.0)
MZI_PERP = InterferometerModel(delay_p=22.9, t_bs1=0.25, r_bs1=0.75,
                               t_bs2=0.48, r_bs2=0.52)
CW = ExcitationConfig(mode="cw")


def cw_histograms(emitter, mzi_perp, mzi_par, bin_width=0.1, span=45.0,
                  scale=5e4, noisy=False, seed=0):
    half = int(round(span / bin_width))
    tau = np.arange(-half, half + 1) * bin_width
    g2 = cw_g2(emitter, tau) * scale
    perp, _ = cw_hom_pair(emitter, mzi_perp, tau)
    _, par = cw_hom_pair(emitter, mzi_par, tau)
    perp, par = perp * scale, par * scale
    if noisy:
        rng = np.random.default_rng(seed)
        g2, perp, par = (rng.poisson(v).astype(float) for v in (g2, perp, par))
    return (Histogram(tau, g2, bin_width, "g2"),
            Histogram(tau, perp, bin_width, "g2_perp"),
            Histogram(tau, par, bin_width, "g2_parallel"))


class TestJointHomFit:
    def test_noiseless_self_consistency(self):
        h_g2, h_perp, h_par = cw_histograms(EM_TRUE, MZI_PERP, MZI_PERP)
        result = joint_hom_fit(h_g2, h_perp, h_par, CW, EM_TRUE, MZI_PERP,
                               tie_bs2=True)
        assert result.converged
        assert result.residual_norm < 1e-12
        assert result.params["r_cw"] == pytest.approx(0.1, rel=1e-6)
        assert result.params["tau_c_prime"] == pytest.approx(0.55, rel=1e-6)
        assert result.params["t_bs1_perp"] == pytest.approx(0.25, rel=1e-6)
        assert result.params["t_bs2_perp"] == pytest.approx(0.48, rel=1e-6)

    def test_recovers_from_perturbed_start(self):
        h_g2, h_perp, h_par = cw_histograms(EM_TRUE, MZI_PERP, MZI_PERP)
        start_em = EmitterModel(t1=1.75, r_cw=0.25, tau_c_prime=1.4, f_overlap=1.0)
        start_mzi = InterferometerModel(delay_p=22.9, t_bs1=0.4, r_bs1=0.6,
                                        t_bs2=0.5, r_bs2=0.5)
        result = joint_hom_fit(h_g2, h_perp, h_par, CW, start_em, start_mzi,
                               tie_bs2=True)
        assert result.params["r_cw"] == pytest.approx(0.1, rel=1e-4)
        assert result.params["tau_c_prime"] == pytest.approx(0.55, rel=1e-4)
        assert result.params["t_bs1_perp"] == pytest.approx(0.25, rel=1e-4)

    def test_poisson_noise_recovery_within_five_percent(self):
        h_g2, h_perp, h_par = cw_histograms(EM_TRUE, MZI_PERP, MZI_PERP,
                                            noisy=True, seed=11)
        result = joint_hom_fit(h_g2, h_perp, h_par, CW, EM_TRUE, MZI_PERP,
                               tie_bs2=True)
        assert result.params["r_cw"] == pytest.approx(0.1, rel=0.05)
        assert result.params["tau_c_prime"] == pytest.approx(0.55, rel=0.05)
        assert result.params["t_bs1_perp"] == pytest.approx(0.25, rel=0.05)
        assert result.params["t_bs2_perp"] == pytest.approx(0.48, rel=0.05)
        sigma = result.uncertainties["tau_c_prime"]
        assert 0 < sigma < 0.05

    def test_count_rescaling_invariance(self):
        h_g2, h_perp, h_par = cw_histograms(EM_TRUE, MZI_PERP, MZI_PERP,
                                            noisy=True, seed=3)
        r1 = joint_hom_fit(h_g2, h_perp, h_par, CW, EM_TRUE, MZI_PERP, tie_bs2=True)
        scaled = [Histogram(h.delays, h.values * 7.0, h.bin_width, h.kind)
                  for h in (h_g2, h_perp, h_par)]
        r2 = joint_hom_fit(*scaled, CW, EM_TRUE, MZI_PERP, tie_bs2=True)
        for name in r1.params:
            assert r2.params[name] == pytest.approx(r1.params[name], rel=1e-6)

    def test_objective_not_worse_than_start(self):
        h_g2, h_perp, h_par = cw_histograms(EM_TRUE, MZI_PERP, MZI_PERP,
                                            noisy=True, seed=5)
        start_em = EmitterModel(t1=1.75, r_cw=0.3, tau_c_prime=2.0, f_overlap=1.0)
        result = joint_hom_fit(h_g2, h_perp, h_par, CW, start_em, MZI_PERP,
                               tie_bs2=True)
        # fitted objective must improve on the starting point
        h2, hp, hl = cw_histograms(start_em, MZI_PERP, MZI_PERP)
        assert result.converged
        assert result.params["tau_c_prime"] < 2.0

    def test_binning_mismatch_rejected(self):
        h_g2, h_perp, h_par = cw_histograms(EM_TRUE, MZI_PERP, MZI_PERP)
        other = Histogram(h_g2.delays[:-2], h_g2.values[:-2], h_g2.bin_width, "g2")
        with pytest.raises(ValueError, match="binning"):
            joint_hom_fit(h_g2, h_perp, other, CW, EM_TRUE, MZI_PERP)

    def test_transform_bound_flagged_not_rejected(self):
        em = EmitterModel(t1=0.2, r_cw=0.1, tau_c_prime=0.55, f_overlap=1.0)
        h_g2, h_perp, h_par = cw_histograms(em, MZI_PERP, MZI_PERP)
        result = joint_hom_fit(h_g2, h_perp, h_par, CW, em, MZI_PERP, tie_bs2=True)
        assert any("transform bound" in n for n in result.notes)


class TestLifetimeFit:
    def _decay(self, t1, tau_e, amp=2e4, bkg=20.0, noisy=False, seed=0):
        t = np.arange(0.0, 20.0, 0.02)
        em = EmitterModel(t1=t1, tau_e=tau_e)
        values = amp * pulsed_emission_profile(em, t) + bkg
        if noisy:
            values = np.random.default_rng(seed).poisson(values).astype(float)
        return Histogram(t, values, 0.02, "g2")

    def test_noiseless_exact_recovery(self):
        result = fit_lifetime(self._decay(1.75, 0.3))
        assert result.residual_norm < 1e-10
        assert result.params["t1"] == pytest.approx(1.75, rel=1e-6)
        assert result.params["tau_e"] == pytest.approx(0.3, rel=1e-6)

    def test_poisson_noise_t1_within_two_percent(self):
        result = fit_lifetime(self._decay(1.75, 0.3, amp=2e4, noisy=True, seed=8))
        assert result.params["t1"] == pytest.approx(1.75, rel=0.02)

    def test_degenerate_rise_pins_at_bound(self):
        result = fit_lifetime(self._decay(1.75, 0.0))
        assert result.params["tau_e"] <= 2e-4
        assert math.isinf(result.uncertainties["tau_e"])
        assert any("lower bound" in n for n in result.notes)
        assert result.params["t1"] == pytest.approx(1.75, rel=1e-4)


class TestFringeFit:
    def test_noiseless_exact_recovery(self):
        coh = CoherenceModel(t2=0.8, t_g=1.2)
        d = np.linspace(0.02, 1.2, 30)
        result = fit_fringe(d, g1_fringe(coh, d))
        assert result.residual_norm < 1e-10
        assert result.params["t2"] == pytest.approx(0.8, rel=1e-6)
        assert result.params["t_g"] == pytest.approx(1.2, rel=1e-6)
        # derived values reported
        assert result.params["delta_l"] == pytest.approx(1 / (math.pi * 0.8), rel=1e-6)
        assert result.params["tau_c"] == pytest.approx(0.5428437585562522, rel=1e-6)

    def test_beating_splitting_recovered(self):
        omega = math.pi * 3.1
        coh = CoherenceModel(t2=0.8, t_g=1.2, omega_s=omega)
        d = np.linspace(0.01, 1.2, 80)
        rng = np.random.default_rng(4)
        v = np.clip(g1_fringe(coh, d) + rng.normal(0, 0.005, d.size), 0, 1)
        result = fit_fringe(d, v, fit_omega_s=True)
        assert result.params["omega_s"] == pytest.approx(omega, rel=0.02)

    def test_uninformative_points_flagged(self):
        d = np.linspace(0.0, 0.001, 6)
        result = fit_fringe(d, np.ones_like(d))
        assert any(math.isinf(result.uncertainties[n]) for n in ("t2", "t_g"))
        assert any("unbounded" in n for n in result.notes)

    def test_minimum_points_enforced(self):
        with pytest.raises(ValueError, match="5"):
            fit_fringe(np.array([0.1, 0.2]), np.array([0.9, 0.8]))


class TestSpectrumFit:
    GRID = np.arange(-10.0, 10.0 + 1e-9, 0.02)
    ETALON = EtalonConfig(bandwidth=0.25, fsr=40.75)

    def _spectrum(self, delta_l, delta_g, splitting=0.0, etalon=None,
                  scale=1.0, noisy=False, seed=0):
        coh = CoherenceModel(t2=1 / (math.pi * delta_l),
                             t_g=math.sqrt(2 * math.log(2)) / (math.sqrt(math.pi) * delta_g),
                             omega_s=math.pi * splitting)
        spec = spectrum_model(coh, self.GRID)
        if etalon is not None:
            spec = etalon_convolve(spec, etalon)
        values = spec.values * scale
        if noisy:
            values = np.random.default_rng(seed).poisson(values).astype(float)
        return CorrelationCurve(self.GRID, values, 0.02, "spectrum")

    def test_noiseless_exact_recovery_through_etalon(self):
        spec = self._spectrum(0.25, 0.3, etalon=self.ETALON)
        result = fit_spectrum(spec, etalon=self.ETALON)
        assert result.params["delta_l"] == pytest.approx(0.25, rel=1e-4)
        assert result.params["delta_g"] == pytest.approx(0.3, rel=1e-4)

    def test_doublet_splitting_recovered(self):
        spec = self._spectrum(0.25, 0.3, splitting=3.1, etalon=self.ETALON,
                              scale=2e4, noisy=True, seed=12)
        result = fit_spectrum(spec, etalon=self.ETALON, doublet=True)
        assert result.params["splitting"] == pytest.approx(3.1, rel=0.02)

    def test_wide_etalon_inflates_uncertainty_without_bias(self):
        wide = EtalonConfig(bandwidth=0.5, fsr=40.75)
        biases = []
        for seed in range(4):
            spec = self._spectrum(0.2, 0.35, etalon=wide, scale=5e4,
                                  noisy=True, seed=seed)
            result = fit_spectrum(spec, etalon=wide)
            biases.append(result.params["delta_v"])
        true_v = 0.535 * 0.2 + math.sqrt(0.217 * 0.04 + 0.35 ** 2)
        assert abs(np.mean(biases) - true_v) / true_v < 0.05
        narrow = self._spectrum(0.2, 0.35, etalon=self.ETALON, scale=5e4,
                                noisy=True, seed=0)
        r_narrow = fit_spectrum(narrow, etalon=self.ETALON)
        r_wide = fit_spectrum(self._spectrum(0.2, 0.35, etalon=wide, scale=5e4,
                                             noisy=True, seed=0), etalon=wide)
        assert r_wide.uncertainties["delta_v"] > 0
