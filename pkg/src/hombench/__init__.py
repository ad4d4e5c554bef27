"""Hong-Ou-Mandel interference toolkit for a two-level quantum emitter.

Analytic coincidence models, a stochastic photon-stream oracle, coherence
and lineshape analysis, and nonlinear fits, with a command-line front end.
"""

from .core import (CoherenceModel, CorrelationCurve, DetectorModel,
                   EmitterModel, ExcitationConfig, FitResult, Histogram,
                   InterferometerModel, validate)
from .dynamics import (coherence_time_from_dephasing, cw_g2,
                       pulsed_emission_profile, pulsed_g2,
                       solve_reservoir_occupation)
from .hom import (convolve_irf, cw_hom_pair, hwp_visibility,
                  integrated_visibility, pulsed_hom_pair, visibility)
from .coherence import (EtalonConfig, coherence_time, etalon_convolve,
                        etalon_transmission, g1_fringe, spectrum_model,
                        transform_limit_linewidth, voigt_fwhm)
from .montecarlo import (SimConfig, histogram_coincidences, hbt_detect,
                         propagate_and_detect, simulate_emission)
from .fitting import fit_fringe, fit_lifetime, fit_spectrum, joint_hom_fit
from .budget import efficiency_budget

__version__ = "0.1.0"
