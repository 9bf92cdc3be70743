"""Exact diffusion transports from bridge mixtures and time reversal.

Library layout:

* :mod:`bridgemix.schedules`, :mod:`bridgemix.sde` — the tractable linear SDE
  class: schedules, transition/bridge coefficients, densities, scores.
* :mod:`bridgemix.covariance`, :mod:`bridgemix.variogram` — the Gamma operator
  (identity / dense / FFT circulant backings) and spatial kernel fitting.
* :mod:`bridgemix.transport` — posterior weights, exact and learned drifts,
  couplings between the start law and the data atoms.
* :mod:`bridgemix.sampler` — Euler(T) integration and terminal statistics.
* :mod:`bridgemix.objectives`, :mod:`bridgemix.regressor` — training losses
  and the from-scratch MLP.
* :mod:`bridgemix.cli` — the ``bridgemix`` command.
"""

from .covariance import (
    CirculantTorusCovariance,
    DenseCovariance,
    ExponentialKernel,
    IdentityCovariance,
    PlaneEmbeddedCovariance,
    RbfKernel,
    WhiteNoiseKernel,
    build_torus_operator,
    embed_plane_operator,
)
from .objectives import Batch, LossKind, loss_and_gradient, regularizer_fd, sample_batch
from .regressor import Mlp, NetSpec, TrainConfig, load_checkpoint, save_checkpoint, train
from .sampler import (
    PathBundle,
    Trajectory,
    TransitionMatrixEstimate,
    estimate_transition_matrix,
    euler_sample,
    noising_forward_states,
    run_bridge_realization,
    run_paths,
    simulate_noising_forward,
)
from .schedules import BetaSchedule, ConstantBeta, GeometricVE, LinearVP
from .sde import (
    BridgeParams,
    SdeSpec,
    TransitionParams,
    bridge_logdensity,
    bridge_params,
    bridge_score,
    sample_bridge_point,
    sample_transition,
    score_wrt_initial,
    score_wrt_terminal,
    transition_logdensity,
    transition_params,
)
from .transport import (
    Dataset,
    DeltaStart,
    EmpiricalStart,
    ExactBridgeMixtureField,
    ExactReversalField,
    GaussianStart,
    IdentityCoupling,
    LearnedEndpointField,
    LearnedScoreField,
    bridge_mixture_weights,
    centered_start,
    recover_expectation_from_score,
    reversal_weights,
)
from .variogram import EmpiricalVariogram, VariogramFit, empirical_variogram, fit_variogram_wls

__version__ = "0.1.0"
