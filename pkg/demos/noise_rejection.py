"""Fusing a sharp map with flat noise maps: the sharp one carries the weight.

Run: python demos/noise_rejection.py
"""
import numpy as np

from locprior.estimator import fuse_maps

rng = np.random.default_rng(0)
clean = np.zeros((16, 16))
clean[5, 11] = 1.0
maps = np.stack([rng.uniform(size=(16, 16)), clean, rng.uniform(size=(16, 16))])
out = fuse_maps(maps)
print("fusion weights:", np.round(out.weights, 3))
print("fused argmax:", np.unravel_index(int(np.argmax(out.map)), out.map.shape), "(planted at (5, 11))")
