"""Implicit backward-induction kernel for unreflected BSDE systems.

One step computes, per node of a level,

    z_p = E[Y_next * dW_p] / dt
    y   = E[Y_next] + driver(t, w, y, z) * dt        (implicit in y)

by Picard iteration started from the plain expectation.  The contraction
condition ``dt * C < 1`` (C the driver's Lipschitz constant) is enforced at
solve start, so the fixed point is unique; the iteration cap is generous
because the convergence rate degrades like 1/(1 - dt*C) near the boundary
(penalized drivers deliberately run close to it).
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, SizingError

DEFAULT_PICARD_TOL = 1e-12
DEFAULT_MAX_ITER = 10000


class DriverFn:
    """A driver with a declared Lipschitz constant.

    `fn(t, w, y, z)` is evaluated on whole levels: w is (n, d), y is
    (n, m1, m2), z is (n, d, m1, m2); the result has y's shape.
    """

    def __init__(self, fn, lipschitz: float):
        self.fn = fn
        self.lipschitz = float(lipschitz)

    def __call__(self, t, w, y, z):
        return self.fn(t, w, y, z)

    @classmethod
    def from_generator(cls, generator):
        return cls(generator, generator.lipschitz)


def check_contraction(dt: float, lipschitz: float, what: str = "driver"):
    if dt * lipschitz >= 1.0:
        n_min = int(np.ceil(dt * lipschitz)) + 1
        raise SizingError(
            f"time step dt={dt:g} is too coarse for the {what} Lipschitz constant "
            f"{lipschitz:g} (need dt*C < 1); refine the tree by a factor of at least {n_min}"
        )


def picard_solve(E, update, picard_tol=DEFAULT_PICARD_TOL, max_iter=DEFAULT_MAX_ITER):
    """Iterate ``y <- E + update(y)`` to its fixed point.

    Returns (y, iterations).  `update` already includes the dt factor.
    """
    y = E.copy()
    for it in range(1, max_iter + 1):
        y_new = E + update(y)
        delta = float(np.abs(y_new - y).max()) if y.size else 0.0
        y = y_new
        if delta <= picard_tol:
            return y, it
    raise ConvergenceError(
        f"Picard iteration did not converge within {max_iter} iterations "
        f"(last update {delta:g})"
    )


def bsde_level_step(tree, t, next_values, driver, picard_tol=DEFAULT_PICARD_TOL,
                    max_iter=DEFAULT_MAX_ITER):
    """One implicit Euler step for every node of level t at once.

    Returns (y, z, iterations) with y shaped (n_t, m1, m2) and z shaped
    (n_t, d, m1, m2).  z is the martingale coefficient of the next-level
    values and is not affected by the implicit y-solve.
    """
    E = tree.expect_next(t, next_values)
    z = tree.z_next(t, next_values)
    w = tree.level_w(t)
    time = tree.time(t)
    dt = tree.dt

    y, iters = picard_solve(
        E, lambda y: dt * np.asarray(driver(time, w, y, z), dtype=float),
        picard_tol=picard_tol, max_iter=max_iter,
    )
    return y, z, iters


def bsde_step(tree, t, node, next_values, driver, picard_tol=DEFAULT_PICARD_TOL,
              max_iter=DEFAULT_MAX_ITER):
    """Single-node step (path trees); thin wrapper over the level kernel."""
    y, z, _ = bsde_level_step(tree, t, next_values, driver, picard_tol, max_iter)
    return y[node], z[node]


def solve_system(tree, driver, terminal_values, picard_tol=DEFAULT_PICARD_TOL,
                 max_iter=DEFAULT_MAX_ITER):
    """Full unreflected backward solve.

    Parameters
    ----------
    terminal_values : (n_leaves, m1, m2) array of leaf values.

    Returns
    -------
    Y : list of per-level value arrays, index 0 (root) to N (leaves).
    Z : list of per-level martingale coefficient arrays, index 0 to N-1.
    """
    check_contraction(tree.dt, driver.lipschitz)
    N = tree.N
    Y = [None] * (N + 1)
    Z = [None] * N
    Y[N] = np.asarray(terminal_values, dtype=float)
    for t in range(N - 1, -1, -1):
        Y[t], Z[t], _ = bsde_level_step(tree, t, Y[t + 1], driver, picard_tol, max_iter)
    return Y, Z
