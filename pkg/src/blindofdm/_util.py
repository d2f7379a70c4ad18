import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def config_hash(obj) -> str:
    """Short sha256 digest of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def fmt_float(x) -> str:
    """Round-trippable text form used by every CSV writer."""
    return format(float(x), ".17g")


def derive_rng(seed, *stream) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``; the key order matters."""
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])
