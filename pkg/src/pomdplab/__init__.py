"""Tabular finite-horizon POMDP laboratory: exact filtering, expert
distillation, frame-stacked baselines and the error functionals that compare them."""

from .bench import ExperimentGrid, martingale_check, rows_to_csv, run_grid, verify_bounds
from .belief import (Belief, BeliefCache, ImpossibleObservationError, approx_belief,
                     bayes_update, belief_update, density_ratio, dpr, enumerate_windows,
                     transition_push, true_belief, tv_dist, v_inf)
from .core import (DEFAULT_CAP, CapExceededError, Estimate, HistoryPolicy, LatentPolicy,
                   LayeredPomdp, ModelError, MonteCarlo, ShapeMismatchError, SwitchPolicy,
                   Trajectory, TrajectoryBatch, TrajectoryTable, ValidationReport, WindowPolicy,
                   enumerate_trajectories, policy_value, propagate, sample_batch,
                   sample_trajectory, state_occupancy, uniform_policy, validate, value)
from .distill import behavior_cloning, forward_finite, forward_population
from .generators import (PerturbedBlockMeta, check_meta, gen_lower_bound, gen_noisy_sensor,
                         gen_perturbed_block, gen_random_pomdp, gen_smoothing_toy, load_model,
                         save_model)
from .metrics import (action_prediction_error, belief_contraction_error, decodability_error,
                      generalized_contraction, history_expectation, suboptimality, trajectory_tv)
from .planning import (LatentSolution, compose_with_approx_belief, compose_with_true_belief,
                       framestack_plan, framestack_q_learning, latent_optimal, motor_noise_kernel,
                       optimal_executable, smoothed_latent_optimal)

__version__ = "0.1.0"
