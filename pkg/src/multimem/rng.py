"""Counter-based random streams with serialisable state.

Every sampler takes a :class:`numpy.random.Generator`.  We standardise on the
Philox counter-based bit generator so that chains can be split into
independent substreams and resumed exactly from a stored state.
"""

from __future__ import annotations

import numpy as np

BIT_GENERATOR = "Philox"


def make_rng(seed) -> np.random.Generator:
    """Return a Philox-backed generator for an integer seed or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed, n: int) -> list[np.random.Generator]:
    """Independent child streams, e.g. one per worker or per replicate."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(n)]


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": [int(v) for v in obj.ravel()], "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def rng_state(rng: np.random.Generator) -> dict:
    """JSON-serialisable snapshot of the generator state."""
    return _to_jsonable(rng.bit_generator.state)


def rng_from_state(state: dict) -> np.random.Generator:
    """Rebuild a generator from :func:`rng_state` output."""
    state = _from_jsonable(state)
    name = state["bit_generator"]
    bitgen = getattr(np.random, name)()
    bitgen.state = state
    return np.random.Generator(bitgen)
