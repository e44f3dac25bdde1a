"""Meta-learned variational Monte Carlo for ensembles of Max-Cut Hamiltonians."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CapacityError, ConfigError, DegenerateEnsembleError, InvalidArgumentError, MetaVmcError,
    NumericDomainError,
)
from .ising import (  # noqa: F401
    MaxCutTask, SkTask, TaskDistribution, cut_value, local_energy, make_base_graph, sample_sk_task,
    sample_task,
)
from .rbm import RbmParams, init_params, log_amplitude, log_gradient, log_ratio_flip  # noqa: F401
from .samplers import McmcConfig, SampleBatch, exact_distribution, sample_exact, sample_mcmc  # noqa: F401
from .vmc import (  # noqa: F401
    AdaptConfig, EnergyEstimate, adapt, estimate_energy, estimate_gradient, exact_energy, exact_gradient,
    train_vmc,
)
