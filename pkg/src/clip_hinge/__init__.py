"""PPO-Clip as hinge-loss classification: tabular and neural agents on finite MDPs."""
from .emda import EmdaConfig, EmdaResult, InvalidBatchError, run_emda, verify_target_logform
from .envs import EnvSpec, build_env, chain, gridworld, random_mdp
from .hinge import BatchEntry, BatchSample, ClassifierSpec, clipped_surrogate, generalized_loss, subgradient
from .mdp import (TabularMdp, TabularPolicy, discounted_visitation, evaluate_policy,
                  performance_difference_residual, total_expected_reward)
from .metrics import RunMetrics, read_metrics, write_metrics
from .neural import EnergyPolicy, NeuralRunConfig, run_neural, sample_sigma_t
from .nets import FeatureMap, TwoLayerNet, forward, grad_alpha, init_net, load_net, project, save_net
from .oracle import OptimalSolution, optimality_gap, solve_optimal
from .tabular import TabularRunConfig, run_tabular

__version__ = "0.1.0"
