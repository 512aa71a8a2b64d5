"""Seeded, order-independent random substreams.

Each (seed, key...) tuple maps to its own generator, so results do not depend
on the order in which agents or runs are evaluated.
"""
import numpy as np


def substream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def run_seed(master, run):
    """Per-run seed derived by hashing (master, run index)."""
    return int(np.random.SeedSequence(int(master), spawn_key=(int(run),)).generate_state(1, np.uint64)[0])
