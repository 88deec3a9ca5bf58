"""Pure-numpy backend for the dense Gaussian pairwise accumulation.

Processes output pixels in row tiles so the scratch (tile x N) distance
matrix stays bounded regardless of image size.
"""

import numpy as np

BACKEND = "numpy"

TILE_ROWS = 1024


def gauss_accumulate(out, values, scaled, weight):
    """out[i] += weight * sum_j exp(-0.5 * ||scaled_i - scaled_j||^2) * values[j].

    The sum includes the self term j == i (the caller subtracts it).
    `scaled` holds features already divided by their bandwidths.
    """
    sq = np.einsum("nd,nd->n", scaled, scaled)
    n = scaled.shape[0]
    for start in range(0, n, TILE_ROWS):
        stop = min(start + TILE_ROWS, n)
        block = scaled[start:stop]
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (block @ scaled.T)
        np.maximum(d2, 0.0, out=d2)
        # pin the diagonal so the self term is exactly `weight`
        idx = np.arange(start, stop)
        d2[idx - start, idx] = 0.0
        k = np.exp(np.multiply(d2, -0.5, out=d2), out=d2)
        out[start:stop] += weight * (k @ values)
