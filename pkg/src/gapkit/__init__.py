"""gapkit: measure and manipulate the geometry of paired vision-language embeddings."""

__version__ = "0.1.0"

from .embedstore import (  # noqa: F401
    DatasetManifest,
    PairedEmbeddingDataset,
    l2_normalize,
    read_dataset,
    write_dataset,
)
from .geometry import (  # noqa: F401
    AlignmentConfig,
    GapGeometry,
    PcaProjection,
    align,
    compute_gap,
    mean_resultant_length,
    pca_project,
)
from .probe import (  # noqa: F401
    ProbeModel,
    TrainConfig,
    TrainHistory,
    evaluate_auc,
    fuse,
    roc_auc,
    train_probe,
)
from .sweep import SweepConfig, SweepReport, aggregate, run_sweep  # noqa: F401
