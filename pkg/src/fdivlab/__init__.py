"""fdivlab: f-divergences, their variational bounds and adversarial training."""

from fdivlab.catalog import BUILTIN_NAMES, DivergenceSpec, builtin, combine, reverse, scale
from fdivlab.distributions import DiscreteDistribution, GaussianMixture1D, from_descriptor
from fdivlab.exact import bound_value, divergence, optimal_critic

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "DiscreteDistribution",
    "DivergenceSpec",
    "GaussianMixture1D",
    "bound_value",
    "builtin",
    "combine",
    "divergence",
    "from_descriptor",
    "optimal_critic",
    "reverse",
    "scale",
]
