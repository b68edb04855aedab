"""Coarse-to-fine generative modelling of 3D point clouds with a pyramid of
point autoencoders and residual-correcting latent GANs."""
from .metrics import MetricReport, chamfer, coverage, emd_approx, emd_exact, jsd, mmd
from .pointcloud import ResolutionLadder, farthest_point_subsample, knn_upsample
from .pyramid import Pyramid, PyramidStage, load_pyramid, save_pyramid, synthesize, upsample_shape

__version__ = "0.1.0"

__all__ = [
    "MetricReport", "Pyramid", "PyramidStage", "ResolutionLadder", "chamfer", "coverage",
    "emd_approx", "emd_exact", "farthest_point_subsample", "jsd", "knn_upsample", "load_pyramid",
    "mmd", "save_pyramid", "synthesize", "upsample_shape",
]
