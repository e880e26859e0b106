import os


def worker_count() -> int:
    """Thread cap from ``SKELETREE_THREADS`` in scipy's ``workers`` convention.

    Unset or 0 means all cores (-1).
    """
    raw = os.environ.get("SKELETREE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SKELETREE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("SKELETREE_THREADS must be >= 0")
    return -1 if n == 0 else n
