"""Deep clustering of univariate time series.

Series are resampled, min-max scaled and cut into overlapping windows that
form a small grayscale matrix.  A convolutional autoencoder learns a latent
code for each matrix; a Student's t clustering head is trained jointly with
the reconstruction loss.  Both the soft assignment (C1) and k-means on the
latent codes (C2) are produced, and a two-stage check built on silhouette,
Calinski-Harabasz and Davies-Bouldin picks between them.
"""

__version__ = "0.1.0"

from .windowing import TimeSeries, SeriesMatrix, to_matrix, window_transform  # noqa: E402
from .dcae import DcaeModel, build_dcae, encode, decode, pretrain  # noqa: E402
from .clustering import (  # noqa: E402
    ClusteringResult,
    hard_cluster,
    joint_train,
    kmeans,
    select_best,
    soft_assign,
    target_distribution,
)
from .evaluation import adjusted_rand_index, composite_score, raw_scores  # noqa: E402
from .pipeline import PipelineConfig, sweep_k  # noqa: E402
