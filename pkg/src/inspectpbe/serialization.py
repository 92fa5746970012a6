"""JSON helpers that never emit bare non-finite numbers."""

from __future__ import annotations

import hashlib
import json
import math


def num(x, neg_token: str = "unbounded", pos_token: str = "unstable"):
    """Return ``x`` unchanged if finite, otherwise a string token."""
    if x is None:
        return None
    if isinstance(x, float) and not math.isfinite(x):
        if math.isnan(x):
            return "nan"
        return neg_token if x < 0 else pos_token
    if isinstance(x, float) and x == 0.0:
        return 0.0  # drop the sign of negative zero
    return x


def sanitize(obj):
    if isinstance(obj, float):
        return num(obj)
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    return obj


def dumps(obj) -> str:
    # allow_nan=False turns any leak past sanitize() into a hard error
    return json.dumps(sanitize(obj), indent=2, allow_nan=False) + "\n"


def canonical_hash(obj) -> str:
    blob = json.dumps(sanitize(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
