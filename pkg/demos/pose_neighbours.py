"""Reference poses, their geodesic distances and k nearest neighbours.

Run: python demos/pose_neighbours.py
"""
import math

import numpy as np

from locprior.estimator import knn_references
from locprior.geometry import pairwise_geodesic, rot_z

rots = [rot_z(math.radians(a)) for a in (0, 30, 45, 90, 180, 300)]
np.set_printoptions(precision=3, suppress=True)
print("pairwise geodesic distance (angle / pi):")
print(pairwise_geodesic(rots))
for i, nb in enumerate(knn_references(rots, k=2)):
    print(f"reference {i}: nearest {nb}")
