import hashlib
import re
from typing import Any, Tuple

_INTEGER = re.compile(r'^[+-]?\d+$')


def derive_seed(global_seed: int, class_id: Any) -> int:
    """Seed for one class that does not depend on processing order."""
    digest = hashlib.sha256(f"{global_seed}:{class_id}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little') % (2 ** 32)


def class_sort_key(class_id: Any) -> Tuple[int, int, str]:
    """Numeric class identifiers sort numerically, others lexically after them."""
    text = str(class_id)
    if _INTEGER.match(text):
        return (0, int(text), text)
    return (1, 0, text)
