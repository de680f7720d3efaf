"""Numerical laboratory for a damped cable/deck suspension bridge model.

The cable is a string and the deck an Euler-Bernoulli beam, coupled by
springs and each damped at one interior point. Modules:

``model``            parameters, modal states, energies, damping-point classification
``galerkin``         modal generator matrix and shifted solves
``spectral``         eigenvalues, resolvent sweeps, the wave stability function
``characteristics``  exact Riemann-invariant solver for the decoupled string
``nonlinearity``     nonlinear families, truncation, Lipschitz/derivative diagnostics
``timestepper``      implicit-midpoint integration and energy audits
``dynamics``         decomposition, absorbing-set and attractor experiments
``cli``              JSON-configured batch runner
"""

from .errors import *  # noqa: F401,F403
from .model import (DampingTag, EnergyBreakdown, ModalState, ModelParams, classify_damping_point,
                    energy_norm, random_state, total_energy, unit_mode)
from .galerkin import DiscreteGenerator, apply, assemble, h_minus1_norm, sigma_min, solve_shifted
from .spectral import F_xi, F_xi_inf, eigenvalues, pruss_sweep, spectral_abscissa
from .characteristics import RiemannField, run_characteristics, scatter_at_damping
from .nonlinearity import Family, NonlinearitySpec, eval_F, lift_to_state, phi_R
from .timestepper import (TrajectoryRecord, dissipation_residual, fit_decay_rate, simulate,
                          simulate_batch)
from .crossval import cross_validate
from .dynamics import absorbing_probe, attractor_probe, decompose, regularity_audit

__version__ = "0.1.0"
