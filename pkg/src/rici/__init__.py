"""Radial intersection count images, spin images and 3D shape contexts, plus the clutterbox benchmark."""

__version__ = "0.1.0"

import warnings  # noqa: E402

# numba probes for TBB when a parallel kernel first runs; an outdated TBB is harmless here
warnings.filterwarnings("ignore", message=r".*TBB threading layer.*")

from .mesh import OrientedPoint, PointCloud, RigidTransform, TriangleMesh  # noqa: E402
from .rng import Prng  # noqa: E402

__all__ = ["OrientedPoint", "PointCloud", "Prng", "RigidTransform", "TriangleMesh", "__version__"]
