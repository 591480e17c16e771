"""Off-grid sparse direction-of-arrival estimation with Taylor-augmented dictionaries.

Submodules: ``array_model`` (geometry, steering vectors, data), ``dictionary``
(grid and dictionaries), ``conic`` (second-order cone programs and their
interior-point solver), ``estimators`` (LASSO, neighbour, first- and
second-order Taylor group LASSO), ``rip_probe`` (Monte Carlo block-RIP) and
``harness`` (experiments, metrics, command line).
"""

from .array_model import (ArrayGeometry, GeometryError, Snapshot, SourceScene, snr_to_noise_std,
                          steering_derivative, steering_vector, synthesize_snapshot)
from .dictionary import (ConfigurationError, DictionarySet, FrequencyGrid, build_dictionary, build_grid,
                         normalize_columns, taylor_residual)
from .estimators import EstimateResult, EstimatorConfig, estimate

__version__ = "0.1.0"
