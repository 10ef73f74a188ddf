"""Population metrics, dream rollouts and latent projections."""

from commons_lab.analysis.metrics import (PopulationMetrics, TrainingCurve, consumption_from_log, efficiency,
                                          moving_average, random_baseline)
from commons_lab.analysis.projection import LatentProjection, pca, project_2d, tsne

__all__ = ["PopulationMetrics", "TrainingCurve", "consumption_from_log", "efficiency", "moving_average",
           "random_baseline", "LatentProjection", "pca", "project_2d", "tsne"]
