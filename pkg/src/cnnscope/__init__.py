"""cnnscope: in-situ CNN training visualization, redundancy detection and pruning."""

from .config import RunConfig, build_config
from .network import Network, NetworkSpec, default_spec
from .pruning import Merge, PrunePlan, apply_prune, plan_prune
from .similarity import SimilarityReport, group_filters, pcc, pcc_matrix, similarity_report
from .tensors import batch_sum, flatten_window, normalize_unit
from .views import (
    GridLayout,
    PolyData,
    TrajectoryTrace,
    accumulate,
    append_trajectory,
    build_distribution_grid,
    build_image_grid,
    build_weight_grid,
    grid_layout,
    trajectory_polydata,
)
from .vtkio import read_vtp, write_csv, write_vtp

__all__ = [
    "RunConfig",
    "build_config",
    "Network",
    "NetworkSpec",
    "default_spec",
    "Merge",
    "PrunePlan",
    "apply_prune",
    "plan_prune",
    "SimilarityReport",
    "group_filters",
    "pcc",
    "pcc_matrix",
    "similarity_report",
    "batch_sum",
    "flatten_window",
    "normalize_unit",
    "GridLayout",
    "PolyData",
    "TrajectoryTrace",
    "accumulate",
    "append_trajectory",
    "build_distribution_grid",
    "build_image_grid",
    "build_weight_grid",
    "grid_layout",
    "trajectory_polydata",
    "read_vtp",
    "write_csv",
    "write_vtp",
]

__version__ = "0.1.0"
