"""Smith normal form of integer matrices.

Used as an exact, floating-point-free oracle for homology ranks: the Betti
numbers from harmonic-kernel dimensions must agree with these.
"""

import numpy as np
import scipy.sparse as sp

_OVERFLOW_GUARD = 2**40


def _as_int_array(a):
    if sp.issparse(a):
        a = a.toarray()
    a = np.asarray(a)
    if a.dtype == object:
        return a.copy()
    if not np.issubdtype(a.dtype, np.integer):
        r = np.rint(a)
        if not np.array_equal(r, a):
            raise ValueError("matrix has non-integer entries")
        a = r
    return a.astype(np.int64)


def _smallest_nonzero(block):
    rr, cc = np.nonzero(block)
    if rr.size == 0:
        return None
    i = int(np.argmin(np.abs(block[rr, cc])))
    return int(rr[i]), int(cc[i])


def smith_diagonal(a) -> list[int]:
    """Nonzero invariant factors d_1 | d_2 | ... of an integer matrix."""
    A = _as_int_array(a)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    rows, cols = A.shape
    diag = []
    r = 0
    while r < min(rows, cols):
        pos = _smallest_nonzero(A[r:, r:])
        if pos is None:
            break
        pr, pc = pos[0] + r, pos[1] + r
        A[[r, pr], :] = A[[pr, r], :]
        A[:, [r, pc]] = A[:, [pc, r]]
        while True:
            p = A[r, r]
            col = A[r + 1 :, r]
            idx = np.flatnonzero(col) + r + 1
            if idx.size:
                q = A[idx, r] // p
                A[idx, r:] -= np.outer(q, A[r, r:])
            row = A[r, r + 1 :]
            jdx = np.flatnonzero(row) + r + 1
            if jdx.size:
                q = A[r, jdx] // p
                A[r:, jdx] -= np.outer(A[r:, r], q)
            rest_col = np.flatnonzero(A[r + 1 :, r])
            rest_row = np.flatnonzero(A[r, r + 1 :])
            if rest_col.size == 0 and rest_row.size == 0:
                sub = A[r + 1 :, r + 1 :]
                bad = np.nonzero(sub % p) if sub.size else (np.array([]),)
                if bad[0].size == 0:
                    break
                # enforce divisibility: fold the offending row into the pivot row
                A[r, :] += A[r + 1 + int(bad[0][0]), :]
                continue
            # a smaller remainder appeared: move it to the pivot and repeat
            if rest_col.size:
                i = rest_col[np.argmin(np.abs(A[r + 1 + rest_col, r]))] + r + 1
                A[[r, i], :] = A[[i, r], :]
            else:
                j = rest_row[np.argmin(np.abs(A[r, r + 1 + rest_row]))] + r + 1
                A[:, [r, j]] = A[:, [j, r]]
        if A.dtype != object and np.abs(A).max(initial=0) > _OVERFLOW_GUARD:
            A = A.astype(object)
        diag.append(abs(int(A[r, r])))
        r += 1
    return diag


def integer_rank(a) -> int:
    return len(smith_diagonal(a))


def smith_betti(coboundaries, counts) -> list[int]:
    """Rational Betti numbers from integer coboundary matrices.

    ``coboundaries[p]`` maps p-cochains to (p+1)-cochains, ``counts[p]`` is the
    number of p-simplices. beta_p = n_p - rank d_p - rank d_{p-1}.
    """
    ranks = [integer_rank(d.toarray() if hasattr(d, "toarray") else d) for d in coboundaries]
    out = []
    for p, n_p in enumerate(counts):
        r_out = ranks[p] if p < len(ranks) else 0
        r_in = ranks[p - 1] if p >= 1 else 0
        out.append(n_p - r_out - r_in)
    return out


def torsion_coefficients(a) -> list[int]:
    return [d for d in smith_diagonal(a) if d > 1]
