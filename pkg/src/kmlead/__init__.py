"""Digitized Kaplan-Meier curves to design-stage survival projections.

The workflow is: calibrate and standardize digitized traces
(:mod:`kmlead.digitizer`), invert them to per-patient records
(:mod:`kmlead.reconstructor`), group trials by baseline similarity
(:mod:`kmlead.similarity`), pool the records through a hierarchical
beta-Stacy model (:mod:`kmlead.synthesis`), and summarize the predictive
ensemble for a planned trial (:mod:`kmlead.projection`).
"""

from .core import (
    BaselineProfile,
    CovariateSummary,
    Finding,
    KMCurve,
    KmleadError,
    ParseError,
    ReconstructedIPD,
    RiskTable,
    StudyId,
    ValidationReport,
    Workspace,
    read_baseline_csv,
    read_ipd_csv,
    read_risk_csv,
    read_workspace,
    read_xy_csv,
    validate_bundle,
    validate_curve,
    validate_risk_table,
    write_baseline_csv,
    write_ipd_csv,
    write_risk_csv,
    write_workspace,
    write_xy_csv,
)
from .digitizer import (
    AffineMap,
    ArmMapping,
    CalibrationAnchors,
    CalibrationError,
    CandidateTable,
    CellDiff,
    ExportBlockedError,
    ExportFragment,
    PixelPoint,
    adjudicate_tables,
    finalize_arm,
    match_arms,
    normalize_label,
    solve_affine,
    standardize_curve,
    transform_trace,
)
from .projection import (
    ArmComparison,
    SurvivalSummary,
    compare,
    ensemble_medians,
    fan_plot_data,
    median_os,
    summarize,
)
from .reconstructor import (
    EventTable,
    KMEstimate,
    ReconstructionError,
    TimeGrid,
    choose_grid,
    discretize,
    km_estimator,
    number_at_risk,
    reconstruct_ipd,
    tabulate_events,
)
from .similarity import (
    ClusteringResult,
    DissimilarityMatrix,
    SimilarityError,
    band,
    cluster_kmedoids,
    covariate_diff,
    dissimilarity_matrix,
    pool_profiles,
    profile_dissimilarity,
    std_diff_binary,
    std_diff_continuous,
)
from .synthesis import (
    BSPHyper,
    BSPParams,
    ConvergenceError,
    PosteriorSample,
    PredictiveBSPFit,
    PredictiveEnsemble,
    bsp_params,
    closed_form_variance,
    collapsed_loglik,
    fit_bhm,
    fit_predictive_bsp,
    posterior_update,
    predictive_draws,
)

__version__ = "1.0.0"
