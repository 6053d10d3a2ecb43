"""Named, keyed random streams derived from one master seed.

``stream(seed, "power-replicates", key...)`` gives the same generator for
the same (seed, name, key) regardless of call order or process, so serial and
parallel runs agree exactly.
"""

import zlib

import numpy as np

STREAMS = ("fit-jitter", "residual-uniforms", "bootstrap", "power-replicates", "simulate", "calibrate")


def name_key(name):
    return zlib.crc32(str(name).encode())


def seed_sequence(seed, name, *key):
    return np.random.SeedSequence(int(seed), spawn_key=(name_key(name),) + tuple(int(k) for k in key))


def stream(seed, name, *key):
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, name, *key)))
