"""Shared-prime detection over RSA moduli with a product/remainder tree."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import gcd, prod


@dataclass(frozen=True, order=True)
class SharedPrimeFinding:
    fingerprint_a: str
    fingerprint_b: str
    shared_factor: int


def product_tree(values: list[int]) -> list[list[int]]:
    tree = [list(values)]
    while len(tree[-1]) > 1:
        level = tree[-1]
        tree.append([prod(level[i : i + 2]) for i in range(0, len(level), 2)])
    return tree


def batch_gcd(moduli: list[int]) -> list[int]:
    """For each N_i, gcd(N_i, product of all other moduli)."""
    if not moduli:
        return []
    if len(moduli) == 1:
        return [1]
    tree = product_tree(moduli)
    rems = tree.pop()
    while tree:
        level = tree.pop()
        rems = [rems[i // 2] % (n * n) for i, n in enumerate(level)]
    return [gcd(r // n, n) for r, n in zip(rems, moduli)]


def find_shared_primes(moduli) -> list[SharedPrimeFinding]:
    """Every unordered pair of distinct moduli with a common factor.

    ``moduli`` is an iterable of ``(fingerprint, modulus)``.  The tree pass
    flags candidate moduli; only those are then compared pairwise, so the
    output is exactly what an all-pairs gcd would report.
    """
    items = sorted({(fp, int(n)) for fp, n in moduli if n and int(n) > 1})
    if len(items) < 2:
        return []
    flags = batch_gcd([n for _, n in items])
    suspects = [item for item, g in zip(items, flags) if g > 1]
    return _pairwise(suspects)


def pairwise_oracle(moduli) -> list[SharedPrimeFinding]:
    """Quadratic reference implementation."""
    items = sorted({(fp, int(n)) for fp, n in moduli if n and int(n) > 1})
    return _pairwise(items)


def _pairwise(items) -> list[SharedPrimeFinding]:
    out = []
    for (fa, na), (fb, nb) in combinations(items, 2):
        if na == nb:
            continue
        g = gcd(na, nb)
        if g > 1:
            a, b = sorted((fa, fb))
            out.append(SharedPrimeFinding(a, b, g))
    return sorted(out)
