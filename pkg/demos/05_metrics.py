# %% [markdown]
# # Region and contour scores
#
# J is mask IoU. F matches boundary pixels within a pixel tolerance, which
# defaults to 0.8% of the image diagonal.

# %%
import numpy as np

from rvos_harness import boundary_f, jaccard
from rvos_harness.metrics import default_tolerance, final_score

gt = np.zeros((32, 32), bool)
gt[8:24, 10:12] = True
shifted = np.roll(gt, 1, axis=1)

print("J:", jaccard(shifted, gt))
for tol in (0, 1, 2):
    print(f"F at tol={tol}:", boundary_f(shifted, gt, tol))
print("default tolerance for 480x854:", default_tolerance((480, 854)))

# %% [markdown]
# Empty against empty is a perfect score; anything against empty is zero.

# %%
empty = np.zeros_like(gt)
print(jaccard(empty, empty), boundary_f(empty, empty), boundary_f(gt, empty))

# %%
print("Final for (78.97, 96.15, 97.59):", final_score(78.97, 96.15, 97.59))
