"""Semi-supervised multilayer graph clustering with power mean Laplacians.

Building blocks: kernel graphs with NFFT-accelerated weight applies
(fastsum), shifted symmetric normalized Laplacians (graphs), Lanczos
eigensolvers and Krylov matrix functions (krylov), the matrix power mean
and its spectral shortcuts (powermean), the multiclass Allen-Cahn
classifier (allencahn), data synthesis and file formats (datapipe), and a
CLI (cli) with run pipelines (runner).
"""

from .allencahn import (
    AllenCahnParams,
    AllenCahnResult,
    LabelData,
    allen_cahn_solve,
    binary_allen_cahn_solve,
    ginzburg_landau_energy,
    predict_labels,
    simplex_project_rows,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    FormatError,
    MultilapError,
    NumericalError,
)
from .fastsum import FastsumPlan, bind_points, build_plan, direct_apply, fastsum_apply
from .graphs import (
    DenseWeights,
    KernelWeights,
    Layer,
    MultilayerGraph,
    SparseWeights,
    build_layer,
    load_edge_list,
)
from .kernels import KernelSpec
from .krylov import (
    EigenResult,
    SymmetricOperator,
    lanczos_fn_apply,
    lanczos_largest_eigs,
    pksm_apply,
)
from .powermean import (
    PowerMeanConfig,
    SpectralBasis,
    power_mean_dense,
    power_mean_eigs,
)

__version__ = "0.1.0"

__all__ = [
    "AllenCahnParams",
    "AllenCahnResult",
    "ConfigError",
    "ConvergenceError",
    "DenseWeights",
    "EigenResult",
    "FastsumPlan",
    "FormatError",
    "KernelSpec",
    "KernelWeights",
    "LabelData",
    "Layer",
    "MultilapError",
    "MultilayerGraph",
    "NumericalError",
    "PowerMeanConfig",
    "SparseWeights",
    "SpectralBasis",
    "SymmetricOperator",
    "allen_cahn_solve",
    "binary_allen_cahn_solve",
    "bind_points",
    "build_layer",
    "build_plan",
    "direct_apply",
    "fastsum_apply",
    "ginzburg_landau_energy",
    "lanczos_fn_apply",
    "lanczos_largest_eigs",
    "load_edge_list",
    "pksm_apply",
    "power_mean_dense",
    "power_mean_eigs",
    "predict_labels",
    "simplex_project_rows",
    "__version__",
]
