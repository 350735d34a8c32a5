"""Learning parameterised flow maps with residual networks, plus UQ on the learned model."""

from .core import BoxDomain, DataPair, DimensionError, Rng, Trajectory, sample_uniform_box
from .systems import (
    SYSTEMS, CascadeParams, SystemDef, analytic_mean_var_ex1, analytic_solution_ex1,
    cascade_param_box, flow_oracle, get_system, integrate_many, integrate_trajectory, lipschitz_estimate,
    rhs_eval, rk4_step,
)
from .data import (
    Dataset, GenConfig, NoiseSpec, generate_pairs, minibatches, pairs_from_trajectory,
    read_dataset, sizing_rule, write_dataset,
)
from .net import (
    AdamState, Network, NetworkSpec, adam_update, backward, forward, init_network,
    load_model, save_model,
)
from .train import TrainConfig, TrainReport, mse_loss, train
from .rollout import (
    DeltaSchedule, ErrorSeries, ExactDecayIncrement, OracleIncrement, PerturbedIncrement,
    error_metrics, predict, predict_batch,
)
from .uq import (
    Density, QuadratureRule, StatSeries, analytic_ex1_evaluator, gauss_legendre, mc_statistics,
    model_evaluator, oracle_evaluator, reference_statistics, rule_for_box, tensor_rule, uq_statistics,
)
from .bounds import (
    BoundInputs, BoundOverflowError, composition_factor, empirical_sup_error, mean_var_bounds, mismatch_bounds,
    uniform_box_mismatch,
)

__version__ = "0.1.0"
