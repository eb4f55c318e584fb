"""Multi-scale hypergraph Laplacian imputation for spatiotemporal sensor data."""

from .baselines import knn_spatial, sensor_mean, tikh_graph
from .data import (DataError, Layout, Mask, MissingnessSpec, Regime, WindowPlan,
                   build_adjacency, generate_mask, load_matrix_csv, plan_windows,
                   save_matrix_csv)
from .discovery import DiscoveryConfig, DiscoveryResult, discover, fit_linear, prefit
from .evaluation import EvalReport, mae_heldout, run_grid
from .operators import (Hyperedge, Hypergraph, SpatialOperator, TemporalOperator,
                        apply_normal_operator, dirichlet_energy, edge_laplacian,
                        graph_laplacian, multiscale_laplacian, temporal_laplacian)
from .pipeline import ImputationResult, impute
from .refinement import CorrectorModel, HCRNConfig, apply_corrector, train_corrector
from .solver import (NumericalBreakdown, PropensityModel, TikhonovConfig, estimate_propensity,
                     ipw_loss, solve_tikhonov)
from .synthetic import SyntheticSpec, add_noise, generate_planted
from .verify import TheoremCheckResult, verify_theorems

__version__ = "0.1.0"
