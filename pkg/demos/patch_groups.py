# %% [markdown]
# Patch groups and the aggregate/extract round trip
#
# A patch group is a reference patch plus its M-1 nearest neighbours (squared
# Euclidean distance over all three channels) inside a W x W search window.
# Patches are flattened channel-planar: the R block, then G, then B.

# %%
import numpy as np

import epgd

rng = np.random.default_rng(0)
h, w = 48, 40
yy, xx = np.mgrid[:h, :w]
img = np.stack([127 + 100 * np.sin(xx / 3.0), 127 + 100 * np.sin(yy / 5.0), 64 + 0 * xx], -1).astype(float)

cfg = epgd.DenoiseConfig(p=4, M=6, W=15, stride=3, r=0)
groups = epgd.extract_patch_groups(img, cfg)
print(len(groups), "groups of", groups[0].size, "patches, dim", groups[0].dim)

# %%
g = groups[len(groups) // 2]
print("coords (row, col):", g.coords.tolist())
print("distances:", np.round(g.distances, 1).tolist())
# the group mean is subtracted; members are zero-mean across the group
print("max |mean of members| = %.1e" % np.abs(g.members.mean(axis=0)).max())

# %%
# Every pixel is covered by some reference patch, so averaging the patches
# back reproduces the image.
back = epgd.aggregate(groups, h, w)
print("round-trip max error: %.1e" % np.abs(back - img).max())

# %%
# Rows of the distance table grow with rank: the reference comes first.
dist = np.array([gr.distances for gr in groups])
print("mean distance by rank:", np.round(dist.mean(axis=0), 1).tolist())
