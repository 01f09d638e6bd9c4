"""One reference kernel, many scales: which channel lights up for a planted object?

Run: python demos/scale_channels.py
"""
import numpy as np

from locprior.estimator import channel_responses, fuse_maps
from locprior.features import extract_features
from locprior.multiscale import distribute_kernel, correlate_multiscale
from locprior.synthetic import generate_reference_set, generate_scene, sample_scene, BenchConfig

refs = generate_reference_set(object_id=1, n_refs=8)[0]
kernel = refs.kernels[0]
print(f"reference kernel {kernel.shape}; distributed channels:")
for dk in distribute_kernel(kernel):
    print(f"  {dk.provenance:8s} rate {dk.rate}  side {dk.tensor.shape[1]:2d}  scale {dk.scale_factor:.2f}")

spec = sample_scene(BenchConfig(), object_id=1, query_index=0)
img, box = generate_scene(spec)
stack = correlate_multiscale(extract_features(img), kernel)
fused = fuse_maps(stack).map
cell = np.unravel_index(int(np.argmax(fused)), fused.shape)
resp = channel_responses(stack, at=cell)
best = int(np.argmax(resp))
print(f"\nobject drawn at {box.size:.1f} px (reference {refs.s_r:.0f} px, ratio {box.size / refs.s_r:.2f})")
print(f"strongest channel at the fused peak: scale {stack.scale_factors[best]:.2f}")
