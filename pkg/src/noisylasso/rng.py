"""Seeded normal generation that is reproducible outside numpy.

Uniforms come from Philox4x64-10 (numpy ``Philox(key=seed)``, counter
starting at zero), read as raw 64-bit words in stream order. Each word ``r``
becomes the open-interval double ``((r >> 11) + 0.5) * 2**-53``. Consecutive
pairs ``(u1, u2)`` feed Box-Muller:

    z1 = sqrt(-2 ln u1) cos(2 pi u2),   z2 = sqrt(-2 ln u1) sin(2 pi u2)

and the output is ``z1, z2, z1', z2', ...`` truncated to the requested size.

Seeds for sub-streams are derived with the SplitMix64 finalizer:

    mix(a, b) = splitmix64(a XOR splitmix64(b + GOLDEN))

where all arithmetic is modulo 2**64.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# stream labels, fixed so serialized seeds stay meaningful
STREAM_MATRIX = 1
STREAM_NOISE = 2
STREAM_G = 3
STREAM_H = 4


def splitmix64(x):
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(a, b):
    a, b = int(a) & MASK64, int(b) & MASK64
    return splitmix64(a ^ splitmix64((b + GOLDEN) & MASK64))


def trial_seed(master_seed, trial_index):
    return mix(master_seed, trial_index)


def substream(seed, label):
    return mix(seed, 0x5EED0000 + int(label))


def uniform_open(seed, size):
    """``size`` doubles in the open interval (0, 1)."""
    raw = np.random.Philox(key=int(seed) & MASK64).random_raw(int(size))
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normal(seed, size):
    size = int(size)
    if size < 0:
        raise ValueError("size must be nonnegative")
    pairs = (size + 1) // 2
    u = uniform_open(seed, 2 * pairs).reshape(pairs, 2)
    radius = np.sqrt(-2.0 * np.log(u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = radius * np.cos(angle)
    z[:, 1] = radius * np.sin(angle)
    return z.reshape(-1)[:size]
