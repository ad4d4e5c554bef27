import pytest

from hombench.budget import efficiency_budget


def test_published_numbers():
    out = efficiency_budget(0.919e6, 80e6, 0.081, 0.885,
                            {"waveguide_coupling": 0.95, "base_emission": 0.5,
                             "polarization": 0.5, "phonon_sideband": 0.8})
    assert out["first_lens_cps"] == pytest.approx(12.9e6, abs=0.1e6)
    assert out["eta_s"] == pytest.approx(0.161, abs=0.002)
    assert out["eta_c"] == pytest.approx(0.848, abs=0.01)


def test_lossless_identity():
    out = efficiency_budget(80e6, 80e6, 1.0, 1.0, [1.0, 1.0])
    assert out["first_lens_cps"] == 80e6
    assert out["eta_s"] == 1.0
    assert out["eta_c"] == 1.0


def test_combined_factor_equivalent():
    separate = efficiency_budget(0.919e6, 80e6, 0.081, 0.885,
                                 [0.95, 0.5, 0.5, 0.8])
    combined = efficiency_budget(0.919e6, 80e6, 0.081, 0.885, [0.19])
    assert separate["eta_c"] == pytest.approx(combined["eta_c"], rel=1e-12)
    assert combined["eta_c"] == pytest.approx(separate["eta_s"] / 0.19, rel=1e-12)


def test_inconsistent_budget_warns():
    with pytest.warns(RuntimeWarning, match="budget inconsistent"):
        out = efficiency_budget(80e6, 80e6, 1.0, 1.0, [0.1])
    assert out["eta_c"] > 1.0


def test_input_validation():
    with pytest.raises(ValueError):
        efficiency_budget(1e6, 0.0, 0.5, 0.5, [])
    with pytest.raises(ValueError):
        efficiency_budget(1e6, 80e6, 1.5, 0.5, [])
    with pytest.raises(ValueError):
        efficiency_budget(1e6, 80e6, 0.5, 0.5, [0.0])
