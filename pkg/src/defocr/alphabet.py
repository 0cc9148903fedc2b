"""Label alphabet: 26 lowercase letters, 10 digits, and a trailing PAD.

Targets are padded with PAD to the fixed sequence length; decoding
strips PAD before producing a string.
"""

import numpy as np

from .errors import RefusalError

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"
PAD_INDEX = len(ALPHABET)
N_LABELS = PAD_INDEX + 1
MAX_LEN = 16

_CHAR_TO_INDEX = {c: i for i, c in enumerate(ALPHABET)}


def char_to_index(c: str) -> int:
    try:
        return _CHAR_TO_INDEX[c]
    except KeyError:
        raise RefusalError(f"character {c!r} is not in the alphabet") from None


def encode_target(text: str, length: int = MAX_LEN) -> np.ndarray:
    """Lowercased character indices, PAD-extended to the fixed length."""
    folded = text.casefold()
    if len(folded) > length:
        raise RefusalError(
            f"text {text!r} has {len(folded)} characters, limit is {length}"
        )
    labels = np.full(length, PAD_INDEX, dtype=np.int64)
    for i, c in enumerate(folded):
        labels[i] = char_to_index(c)
    return labels


def decode_labels(labels) -> str:
    """Map indices to characters, dropping every PAD."""
    out = []
    for v in labels:
        v = int(v)
        if v == PAD_INDEX:
            continue
        if not 0 <= v < PAD_INDEX:
            raise RefusalError(f"label index {v} outside the alphabet")
        out.append(ALPHABET[v])
    return "".join(out)
