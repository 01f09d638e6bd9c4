"""Full location prior for one synthetic query, then the 3D translation.

Run: python demos/localize_scene.py
"""
from locprior.bench import prior_box
from locprior.estimator import localize
from locprior.features import extract_features
from locprior.geometry import CameraIntrinsics, recover_translation
from locprior.metrics import box_iou
from locprior.synthetic import BenchConfig, generate_reference_set, generate_scene, sample_scene

bench = BenchConfig()
refs = generate_reference_set(object_id=0)[0]
intr = CameraIntrinsics(256, 256, 128, 128, 256, 0.1)
for i in range(5):
    img, truth = generate_scene(sample_scene(bench, object_id=0, query_index=i))
    prior = localize(extract_features(img), refs)
    T = recover_translation(prior.center, prior.size, intr)
    print(f"query {i}: truth ({truth.u:6.1f}, {truth.v:6.1f}) size {truth.size:5.1f} | "
          f"prior ({prior.center[0]:6.1f}, {prior.center[1]:6.1f}) size {prior.size:5.1f} | "
          f"IoU {box_iou(prior_box(prior), truth):.2f} | T = {T.round(3)}")
