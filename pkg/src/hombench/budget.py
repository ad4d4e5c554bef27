"""Source efficiency budget from detected count rates.

Works back from the detected rate through the measured optical throughput
and detector efficiency to the first-lens rate, the source efficiency per
excitation pulse, and the emitter-to-waveguide coupling efficiency after
dividing out the known loss factors.
"""

from __future__ import annotations

import warnings

__all__ = ["efficiency_budget"]


def efficiency_budget(measured_cps: float, rep_rate: float, throughput: float,
                      detector_eff: float, loss_factors) -> dict:
    """Return first_lens_cps, eta_s and eta_c.

    ``loss_factors`` is a mapping name -> transmission or an iterable of
    transmissions; each entry is the fraction of photons surviving that loss
    channel.
    """
    if rep_rate <= 0:
        raise ValueError("rep_rate must be positive")
    for name, val in (("throughput", throughput), ("detector_eff", detector_eff)):
        if not (0.0 < val <= 1.0):
            raise ValueError(f"{name} must be in (0, 1]")
    if isinstance(loss_factors, dict):
        factors = list(loss_factors.values())
    else:
        factors = list(loss_factors)
    if any(not (0.0 < f <= 1.0) for f in factors):
        raise ValueError("loss factors must be in (0, 1]")

    first_lens = measured_cps / (throughput * detector_eff)
    eta_s = first_lens / rep_rate
    product = 1.0
    for f in factors:
        product *= f
    eta_c = eta_s / product if product > 0 else float("inf")
    if eta_c > 1.0:
        warnings.warn("budget inconsistent", RuntimeWarning, stacklevel=2)
    return {"first_lens_cps": first_lens, "eta_s": eta_s, "eta_c": eta_c}
