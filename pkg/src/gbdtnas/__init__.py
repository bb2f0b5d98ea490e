"""Tree-ensemble accuracy prediction, attribution-guided search-space pruning,
and predictor-guided search over one-hot encoded architecture spaces."""

__version__ = "0.1.0"

from .space import (
    Architecture,
    FeatureGroup,
    FeatureSchema,
    PrunedSet,
    SamplingError,
    SchemaError,
    enumerate_space,
    load_schema,
    save_schema,
)
from .gbdt import (
    ArchPool,
    DegenerateTargetsError,
    GbdtModel,
    Normalizer,
    TrainConfig,
    TrainingError,
    feature_importance,
    fit,
    load_model,
    save_model,
)
from .treeshap import (
    InteractionTensor,
    ShapError,
    ShapMatrix,
    brute_force_interactions,
    brute_force_shapley,
    interaction_values,
    shap_values,
)
from .prune import PruneReport, prune_by_importance, prune_first_order, prune_second_order
from .search import (
    SearchConfig,
    SearchError,
    SearchTrace,
    gbdt_nas_s3,
    pairwise_accuracy,
    pairwise_accuracy_with_ties,
    random_search,
    regularized_evolution,
)
from .bench import (
    OracleError,
    PlantedSpec,
    SyntheticOracle,
    TabularOracle,
    UnknownArchitectureError,
    load_synthetic,
    load_table,
    make_synthetic,
    save_synthetic,
    save_table,
    true_optimum,
)

__all__ = [
    "Architecture",
    "ArchPool",
    "DegenerateTargetsError",
    "FeatureGroup",
    "FeatureSchema",
    "GbdtModel",
    "InteractionTensor",
    "Normalizer",
    "OracleError",
    "PlantedSpec",
    "PrunedSet",
    "PruneReport",
    "SamplingError",
    "SchemaError",
    "SearchConfig",
    "SearchError",
    "SearchTrace",
    "ShapError",
    "ShapMatrix",
    "SyntheticOracle",
    "TabularOracle",
    "TrainConfig",
    "TrainingError",
    "UnknownArchitectureError",
    "brute_force_interactions",
    "brute_force_shapley",
    "enumerate_space",
    "feature_importance",
    "fit",
    "gbdt_nas_s3",
    "interaction_values",
    "load_model",
    "load_schema",
    "load_synthetic",
    "load_table",
    "make_synthetic",
    "pairwise_accuracy",
    "pairwise_accuracy_with_ties",
    "prune_by_importance",
    "prune_first_order",
    "prune_second_order",
    "random_search",
    "regularized_evolution",
    "save_model",
    "save_schema",
    "save_synthetic",
    "save_table",
    "shap_values",
    "true_optimum",
]
