"""Sensor degradation in the ray domain: blur, jitter, and segment replacement."""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d


@dataclass
class NoiseConfig:
    enabled: bool = False
    blur_sigma: float = 0.7          # in rays
    jitter_sigma: float = 0.1        # meters
    block_size: int = 4              # rays per replacement block
    replace_prob: float = 0.5


def apply_noise(depth, config: NoiseConfig, rng, d_max):
    """Return a degraded copy of a 1-D depth scan, re-clamped to ``(0, d_max]``.

    Blocks of ``block_size`` contiguous rays (the last one may be shorter) are
    each replaced by their mean with probability ``replace_prob``.
    """
    out = np.array(depth, dtype=float)
    if config.blur_sigma > 0:
        out = gaussian_filter1d(out, config.blur_sigma, mode="nearest")
    if config.jitter_sigma > 0:
        out = out + rng.normal(0.0, config.jitter_sigma, size=out.shape)
    if config.replace_prob > 0:
        k = max(1, int(config.block_size))
        starts = range(0, out.size, k)
        coins = rng.random(len(starts)) < config.replace_prob
        for s, hit in zip(starts, coins):
            if hit:
                out[s:s + k] = out[s:s + k].mean()
    return np.clip(out, 1e-6, d_max)
