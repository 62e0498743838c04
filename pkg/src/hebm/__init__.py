"""Hybrid energy-based models.

The score of the model is the sum of a noise-conditioned neural term and
the gradient of a parameter-free statistic weighted by a learned scalar
(or vector) eta. Training uses denoising score matching over a geometric
noise schedule; sampling uses annealed Langevin dynamics; low-dimensional
quadrature provides exact likelihoods and the fixed-point check that at
the likelihood optimum the model's expected statistic matches the data.
"""

from .errors import (ConfigError, HebmError, NumericError, ParseError,
                     ShapeError, StateError)
from .statistics import (GapStatistic, MarginImageStatistic, MolGraph,
                         RawMomentStatistic, SineStatistic, SmoothnessStatistic,
                         Statistic, ValencyStatistic, ConstantStatistic,
                         laplacian_gradient, laplacian_statistic,
                         margin_gradient, margin_statistic, sine_gradient,
                         sine_statistic, raw_moment_statistic,
                         statistic_from_string, valency_gradient, valency_statistic)
from .model import ScoreModel, load_model, new_model, save_model, score, score_batch
from .training import (NoiseSchedule, TrainConfig, TrainResult, dsm_loss,
                       dsm_terms, make_batch, make_geometric_schedule,
                       perturb, schedule_from_data, train)
from .sampling import SamplerConfig, langevin_step, sample, sample_chain
from .oracle import (DensitySpec, FitResult, boundary_mass, crossed_specs,
                     exact_nll, expected_statistic, finite_diff_grad,
                     finite_diff_jac, fit_eta_exact, fit_eta_to_sample,
                     log_partition, prepare)
from .metrics import MetricReport, chamfer, delta_T, mmd_cov_1nna, validity_ratio
from .datasets import (Dataset, dataset_matrix, gen_margin_images, gen_molecules,
                       gen_point_clouds, gen_toy2d, quantize_molecule,
                       quantize_sample, read_dataset, write_dataset)
from .neighbors import KdTree, build, knn, knn_graph_edges, laplacian

__version__ = "0.1.0"
