# %% [markdown]
# # Key frame compression
#
# Each clip reaches the backend as two images: the untouched key frame and a
# mosaic of the remaining `g*g` frames, shrunk by area averaging.

# %%
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from rvos_harness import compress_clip, mosaic_tile_rect

g = 3
h, w = 96, 128
rng = np.random.default_rng(0)
colors = rng.integers(0, 256, size=(g * g + 1, 3), dtype=np.uint8)
frames = [np.broadcast_to(c, (h, w, 3)).copy() for c in colors]

comp = compress_clip(frames, g)
print("key frame unchanged:", np.array_equal(comp.key_image, frames[0]))
print("tile size (w, h):", comp.tile_size)

# %% [markdown]
# Tile `t` holds frame `t + 1`, laid out row-major.

# %%
for t in range(g * g):
    x, y, tw, th = mosaic_tile_rect(g, t, (w, h))
    print(t, (x, y, tw, th), comp.mosaic[y, x], "expected", colors[t + 1])

# %%
out = Path(tempfile.mkdtemp()) / "mosaic.png"
Image.fromarray(comp.mosaic).save(out)
print("mosaic written to", out)
