"""Multi-fidelity, parametric, non-intrusive reduced-order models for
high-dimensional input/output problems."""

from .alignment import AlignmentMap, apply_alignment, procrustes_align
from .dataset import (
    DesignMatrix,
    LinkedPartition,
    SnapshotMatrix,
    SyntheticProblemSpec,
    evaluate_fields,
    make_linked_partition,
    sample_doe,
)
from .kriging import HierarchicalKriging, KrigingModel, KrigingOptions, fit_hk, fit_kriging
from .metrics import (
    CostLedger,
    ErrorReport,
    ExperimentConfig,
    error_report,
    prediction_error,
    reconstruction_error,
    regression_error,
    run_experiment,
    training_cost,
)
from .pod import LatentSet, PodBasis, fit_pod, project, reconstruct
from .rom import (
    RomConfig,
    RomModel,
    load_model,
    predict_field,
    predict_fields,
    save_model,
    train_ma_rom,
    train_mf_pcas,
    train_pcas,
)
from .subspace import (
    ActiveSubspace,
    SubspaceOptions,
    eigendecompose_select,
    estimate_covariance,
    find_active_subspace,
    fit_discrepancy,
    fit_rbf,
    mf_gradient,
)

__version__ = "0.1.0"
