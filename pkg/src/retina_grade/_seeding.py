"""Deterministic child-seed derivation (splitmix64 mixing)."""

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, *path) -> int:
    """Mix ``master`` with a path of integers or strings into a 63-bit seed.

    ``derive_seed(s, "stage", 2, "threshold", 14)`` is stable across runs and
    platforms, so every task of a sweep owns an independent stream.
    """
    state = _splitmix64(int(master) & _MASK)
    for part in path:
        if isinstance(part, str):
            for byte in part.encode("utf-8"):
                state = _splitmix64(state ^ byte)
            state = _splitmix64(state ^ 0xFF)
        else:
            state = _splitmix64(state ^ (int(part) & _MASK))
    return state >> 1
