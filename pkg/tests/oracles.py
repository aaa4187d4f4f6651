"""Independent reference implementations used as test oracles."""

import itertools
import math

import numpy as np

from fdsurvey.design import SampleDraw


def jacobi_eigenvalues(A, sweeps=100, tol=1e-14):
    """Cyclic Jacobi rotations; independent of LAPACK."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < tol * max(1.0, np.abs(A).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
                V = V @ J
    return np.sort(np.diag(A))[::-1], V


def all_draws(design):
    """Every equally likely sample of a stratified SRSWOR design."""
    per = [itertools.combinations(design.members(g).tolist(), int(design.sizes[g])) for g in range(design.H)]
    return [SampleDraw(np.array(sorted(sum(p, ()))), design) for p in itertools.product(*per)]
