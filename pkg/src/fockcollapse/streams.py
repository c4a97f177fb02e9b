"""Split-stream random number generation.

Trials are grouped into fixed-size blocks. Block ``k`` draws from its own
PCG64 stream spawned from ``SeedSequence(root_seed)``, so a trial's
randomness depends only on ``(root_seed, trial index)`` and blocks can be
generated in any order or in parallel. The seed path of trial ``i`` is the
string ``"<root>/<i // BLOCK>/<i % BLOCK>"``.
"""
import numpy as np

BLOCK = 4096


def block_generator(root_seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def seed_path(root_seed: int, trial: int) -> str:
    return f"{int(root_seed)}/{trial // BLOCK}/{trial % BLOCK}"


def uniforms(root_seed: int, trials: int, per_trial: int = 1) -> np.ndarray:
    """``(trials, per_trial)`` array of U[0, 1) draws, block by block."""
    out = np.empty((trials, per_trial))
    for k, start in enumerate(range(0, trials, BLOCK)):
        stop = min(start + BLOCK, trials)
        out[start:stop] = block_generator(root_seed, k).random((stop - start, per_trial))
    return out


def trial_generator(root_seed: int, trial: int) -> np.random.Generator:
    """Generator for a single trial's own stream (used by one-shot runs)."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(trial // BLOCK, trial % BLOCK))
    return np.random.Generator(np.random.PCG64(ss))
