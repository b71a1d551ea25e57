"""Singular-value truncation rule shared by both kernel backends.

Written with plain loops so the numba backend can compile it directly and the
numpy backend can call it as ordinary Python; both paths then truncate
identically by construction.
"""

# Relative floor below which singular values are treated as numerical zeros.
# Keeps exact swaps at their true numerical rank without counting as
# truncation (discarded weight from the floor is ~1e-26); without it, rounding
# junk accretes one or two spurious Schmidt values per pass.  The literal is
# repeated inside ``select_rank`` because numba freezes globals at compile
# time; keep the two in sync.
RANK_FLOOR = 1e-13


def select_rank(s, max_bond, cutoff):
    """Number of singular values to keep and the relative weight dropped.

    ``s`` must be sorted descending.  A value is dropped when its squared
    relative Schmidt weight falls below ``cutoff`` or when it sits under the
    numerical-rank floor; at most ``max_bond`` values are kept (0 = no cap).
    At least one value is always kept.
    """
    n = s.shape[0]
    total = 0.0
    for i in range(n):
        total += s[i] * s[i]
    if total <= 0.0:
        return 1, 0.0
    floor = s[0] * 1e-13
    keep = 1
    for i in range(1, n):
        if s[i] <= floor:
            break
        if s[i] * s[i] / total < cutoff:
            break
        keep += 1
    if 0 < max_bond < keep:
        keep = max_bond
    dropped = 0.0
    for i in range(keep, n):
        dropped += s[i] * s[i]
    return keep, dropped / total
