"""Pure numpy pivot loop for the bounded-variable tableau simplex.

Must stay operation-for-operation identical to ``_simplex.pyx`` so both
backends produce the same bases and bit-identical values.

Tableau layout (see ``solver.py``): rows ``0..m-1`` are constraints, rows
``m`` and ``m+1`` the phase-2 and phase-1 objectives, last column the
right-hand side.  Every nonbasic column sits at 0; columns at their upper
bound are complemented (``flipped``).
"""
import numpy as np

OPTIMAL, UNBOUNDED, LIMIT = 0, 1, 2
TIE_TOL = 1e-12
DEGENERATE_STEP = 1e-12
HARRIS_TOL = 1e-9


def iterate(T, basis, upper, flipped, eligible, m, obj_row, max_iter, state, dtol, ptol):
    """Run at most ``max_iter`` simplex steps; return (status, steps_taken).

    ``state`` is an int64 array ``[degenerate_pivots, bland_mode, bland_after]``
    that persists between calls.
    """
    ncol = T.shape[1] - 1
    rhs = ncol
    cost = T[obj_row, :ncol]
    elig = eligible.astype(bool)
    for it in range(max_iter):
        # pricing
        if state[1]:
            cand = np.flatnonzero(elig & (cost < -dtol))
            if cand.size == 0:
                return OPTIMAL, it
            q = int(cand[0])
        else:
            masked = np.where(elig, cost, np.inf)
            if masked.size == 0:
                return OPTIMAL, it
            q = int(np.argmin(masked))
            if not masked[q] < -dtol:
                return OPTIMAL, it

        # ratio test (Harris two-pass outside Bland mode)
        col = T[:m, q]
        b = T[:m, rhs]
        ub = upper[basis]
        pos = col > ptol
        neg = (col < -ptol) & np.isfinite(ub)
        ratios = np.full(m, np.inf)
        ratios[pos] = b[pos] / col[pos]
        ratios[neg] = (ub[neg] - b[neg]) / (-col[neg])
        r = -1
        tmin = np.inf
        if state[1]:
            ratios = np.maximum(ratios, 0.0)
            if m:
                tmin = ratios.min()
            if np.isfinite(tmin):
                ties = np.flatnonzero(ratios <= tmin + TIE_TOL)
                r = int(ties[np.argmin(basis[ties])])
        else:
            relaxed = np.full(m, np.inf)
            relaxed[pos] = (b[pos] + HARRIS_TOL) / col[pos]
            relaxed[neg] = (ub[neg] - b[neg] + HARRIS_TOL) / (-col[neg])
            tmax = relaxed.min() if m else np.inf
            if np.isfinite(tmax):
                cand = np.flatnonzero(ratios <= tmax)
                r = int(cand[np.argmax(np.abs(col[cand]))])
                tmin = max(ratios[r], 0.0)

        uq = upper[q]
        if uq <= tmin and uq < np.inf:
            # entering variable reaches its own bound first: complement it
            T[:, rhs] -= T[:, q] * uq
            T[:, q] = -T[:, q]
            flipped[q] ^= 1
            continue
        if r < 0:
            return UNBOUNDED, it

        if tmin <= DEGENERATE_STEP:
            state[0] += 1
            if state[0] >= state[2]:
                state[1] = 1

        # snap a within-tolerance infeasible leaving row onto its bound
        if col[r] > 0:
            if T[r, rhs] < 0.0:
                T[r, rhs] = 0.0
        elif T[r, rhs] > upper[basis[r]]:
            T[r, rhs] = upper[basis[r]]

        if col[r] < 0:
            # leaving variable exits at its upper bound
            bv = basis[r]
            T[r, :] = -T[r, :]
            T[r, bv] = 1.0
            T[r, rhs] += upper[bv]
            flipped[bv] ^= 1

        piv = T[r, q]
        T[r, :] = T[r, :] / piv
        f = T[:, q].copy()
        f[r] = 0.0
        rows = np.flatnonzero(f)
        T[rows] -= np.outer(f[rows], T[r, :])
        basis[r] = q
    return LIMIT, max_iter
