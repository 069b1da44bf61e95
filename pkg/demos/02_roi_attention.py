"""
Region features from attention maps
===================================

A small conv backbone turns a 32x32 face crop into a 64x4x4 feature map. A
second conv stack predicts one sigmoid attention map per region, and each
region pools the feature map with its own map and encoder.
"""

# %%
import numpy as np

from twoaspect.autodiff import Tensor, no_grad
from twoaspect.data import render_frame
from twoaspect.roi import ROIExtractor, attention_pool

rng = np.random.default_rng(3)
roi = ROIExtractor(n_regions=24, width=24, image_size=32, backbone_channels=(16, 32, 64), rng=rng)

aus = [1, 0, 0, 1] + [0] * 8
frame = render_frame(aus, valence=0.4, arousal=-0.2, size=32, rng=rng)
print("frame", frame.shape, "green mean per AU cell row:", frame[1].reshape(4, 8, 4, 8).mean(axis=(1, 3))[0].round(2))

# %%
with no_grad():
    fm = roi.backbone_forward(Tensor(frame))
    att = roi.attention_map_forward(fm)
    regions = roi.region_encode(fm, att)
print("feature map", fm.shape, "attention", att.shape, "regions", regions.shape)
print("attention values stay inside (0, 1):", float(att.data.min()), float(att.data.max()))

# %%
# pooling divides by the map's mass, so a uniform map is a plain spatial mean
uniform = Tensor(np.full((1, 1, 4, 4), 0.3, np.float32))
pooled = attention_pool(fm.reshape(1, 64, 4, 4), uniform).data[0, 0]
print("max |uniform pool - spatial mean| =", float(np.abs(pooled - fm.data.mean(axis=(1, 2))).max()))
