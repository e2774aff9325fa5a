import hashlib

import numpy as np


def derive_seed(seed, name):
    """Stable 64-bit seed for the sub-stream ``name`` of ``seed``."""
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """
    Seeded random source over numpy's PCG64 bit generator, whose streams are
    identical across runs and platforms for the same seed.
    """

    def __init__(self, seed):
        self.seed = int(seed) % 2**64
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def spawn(self, name):
        """Independent stream named ``name``; does not advance this stream."""
        return Rng(derive_seed(self.seed, name))

    def normal(self, shape):
        return self._generator.standard_normal(tuple(shape))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def permutation(self, n):
        return self._generator.permutation(n)

    def choice(self, n, size, replace=False):
        return self._generator.choice(n, size=size, replace=replace)

    def bernoulli(self, probability):
        return bool(self._generator.random() < probability)
