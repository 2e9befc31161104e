"""Transition diagnostics for metastable dynamics via covariant Lyapunov vectors.

The pipeline: simulate or ingest a time series (`dynsys`), optionally
delay-embed scalars (`embedding`), fit a switching VAR model under a
total-variation budget (`fembv`), assemble one-step tangent propagators from
analytic Jacobians or fitted companion matrices (`cocycle`), intersect past
and future stretching filtrations into covariant vectors (`clv`), and
aggregate alignment diagnostics and grid searches (`analysis`).  `cli` chains
everything behind TOML experiment files.
"""

from .analysis import (
    AlignmentSeries,
    GridSearchError,
    GridSearchReport,
    InsufficientDataError,
    MetricSpec,
    alignment_cosine,
    alignment_series,
    delta_state_means,
    flow_alignment,
    gridsearch,
    near_neutral_index,
    surrogate_flow_alignment,
    total_variation,
    wing_label,
    wing_labels,
)
from .clv import (
    ClvParams,
    ClvResult,
    ClvSeries,
    MultiplicityWarning,
    NoIntersectionError,
    clv_at,
    clv_series,
    le_spectrum_qr,
)
from .cocycle import (
    CocycleSource,
    RankCollapseError,
    StabilizedProduct,
    analytic_cocycle,
    companion_matrix,
    constant_cocycle,
    stabilized_product,
    var_cocycle,
)
from .dynsys import (
    IntegrationBlowupError,
    OdeModel,
    TimeSeries,
    fitzhugh_nagumo,
    lorenz63,
    make_model,
    model_defaults,
    read_series_csv,
    simulate,
    tangent_propagator,
    tangent_propagators,
    write_series_csv,
)
from .embedding import EmbeddingSpec, delay_embed
from .errors import ClvlabError, ConfigError, NumericalError
from .fembv import (
    Affiliation,
    ClusterParams,
    ConditioningError,
    DegenerateClusterError,
    FittedModel,
    LCurveResult,
    bv_budget,
    fit_fembv,
    fit_var_weighted,
    lcurve_select_p,
    model_distance,
    optimize_affiliations,
    reconstruct,
    simulate_var,
    total_loss,
)

__version__ = "0.1.0"

__all__ = [
    "Affiliation",
    "AlignmentSeries",
    "ClusterParams",
    "ClvParams",
    "ClvResult",
    "ClvSeries",
    "ClvlabError",
    "CocycleSource",
    "ConditioningError",
    "ConfigError",
    "DegenerateClusterError",
    "EmbeddingSpec",
    "FittedModel",
    "GridSearchError",
    "GridSearchReport",
    "InsufficientDataError",
    "IntegrationBlowupError",
    "LCurveResult",
    "MetricSpec",
    "MultiplicityWarning",
    "NoIntersectionError",
    "NumericalError",
    "OdeModel",
    "RankCollapseError",
    "StabilizedProduct",
    "TimeSeries",
    "alignment_cosine",
    "alignment_series",
    "analytic_cocycle",
    "bv_budget",
    "clv_at",
    "clv_series",
    "companion_matrix",
    "constant_cocycle",
    "delay_embed",
    "delta_state_means",
    "fit_fembv",
    "fit_var_weighted",
    "fitzhugh_nagumo",
    "flow_alignment",
    "gridsearch",
    "lcurve_select_p",
    "le_spectrum_qr",
    "lorenz63",
    "make_model",
    "model_defaults",
    "model_distance",
    "near_neutral_index",
    "optimize_affiliations",
    "read_series_csv",
    "reconstruct",
    "simulate",
    "simulate_var",
    "stabilized_product",
    "surrogate_flow_alignment",
    "tangent_propagator",
    "tangent_propagators",
    "total_loss",
    "total_variation",
    "var_cocycle",
    "wing_label",
    "wing_labels",
    "write_series_csv",
]
