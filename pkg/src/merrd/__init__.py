"""Minimum excess risk of discrete Bayesian learning problems and its rate-distortion characterization."""

from .bounds import (AsymptoticSpec, BoundsReport, QuantizerChain, bounds_report, chaining_ub, corollary1_lower,
                     dyadic_chain, fisher_asymptotic_mi, realizable_ub, shannon_lower_bound, slb_distortion_floor,
                     theorem5_lower, ub_conditional, ub_dataset)
from .core import (CapExceededError, DatasetLaw, DiscreteModel, ModelError, build_dataset_law, enumerate_hypotheses,
                   load_model, validate_model)
from .info import MiResult, cond_mi_y_w_given_zn_x, mi_channel_pair, mi_exact, mi_monte_carlo_w_zn, mi_w_zn
from .ratedist import (RDCurve, RDPoint, RDProblem, ba_direct, check_theorem3, check_theorem4_convergence, curve_DL,
                       curve_Dn, curve_DUn, solve_Dn)
from .risk import (MerResult, bayes_risk, delta_n, distortion, mer_exact, mer_monte_carlo, posterior)

__version__ = "0.1.0"
