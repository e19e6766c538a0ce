"""
First-passage times and reward integrals of general birth-death processes.
"""

from .core.laplace import DistCurve, InversionPlan, invert, transition_probability
from .core.modelspec import BdpModel, TabooSet, load_model_file, make_model
from .core.passage import absorption_probability, explosion_check, fpt_cdf, fpt_density
from .core.reward import reward_cdf, reward_density

__all__ = [
    "BdpModel",
    "DistCurve",
    "InversionPlan",
    "TabooSet",
    "absorption_probability",
    "explosion_check",
    "fpt_cdf",
    "fpt_density",
    "invert",
    "load_model_file",
    "make_model",
    "reward_cdf",
    "reward_density",
    "transition_probability",
]
