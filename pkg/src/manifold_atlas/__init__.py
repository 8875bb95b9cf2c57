"""Test point clouds for manifold structure and learn local charts of them."""

__version__ = "0.1.0"

from .dataset import PointCloud, load_matrix, save_matrix  # noqa: E402
from .distortion import ajd, jaccard_point  # noqa: E402
from .neighbors import knn  # noqa: E402

__all__ = ["PointCloud", "load_matrix", "save_matrix", "ajd", "jaccard_point", "knn", "__version__"]
