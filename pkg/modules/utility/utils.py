from typing import List

import numpy as np


def parse_int_list(text: str) -> List[int]:
    """Parse '2,4,8' or '1-8' (inclusive range) into a list of ints"""
    values: List[int] = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        if '-' in part and not part.startswith('-'):
            lo, hi = part.split('-', 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise ValueError(f"empty integer list: '{text}'")
    return values


def parse_float_list(text: str) -> List[float]:
    """Parse '0.2,0.5,0.8' into a list of floats"""
    values = [float(part) for part in text.split(',') if part.strip()]
    if not values:
        raise ValueError(f"empty number list: '{text}'")
    return values


def replica_key(seed: int, replica: int) -> int:
    """128-bit Philox key for replica `replica` of a run seeded with `seed`"""
    words = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, replica]).generate_state(2, dtype=np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def format_float(value: float) -> str:
    """Stable text form for CSV cells"""
    if value is None:
        return ''
    return repr(float(value))
