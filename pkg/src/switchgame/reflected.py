"""Direct dynamic-programming solver for the obliquely reflected system.

Each backward step is a splitting: the implicit BSDE step with the raw
generator, then the oblique projection onto the constraint region.  The
projection's pushes are the discrete reflection increments; Z is the
pre-projection martingale coefficient (the push is of bounded variation and
does not load on the Brownian increments).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bsde
from .errors import DataError
from .model import (
    GameSpec,
    ValidationReport,
    in_Qbar,
    lower_barrier,
    project_oblique_batch,
    upper_barrier,
)

DEFAULT_PROJ_TOL = 1e-12


@dataclass
class RbsdeSolution:
    """Backward solution fields, level-indexed (0 = root, N = leaves).

    Y[t]            : (n_t, m1, m2) values.
    Z[t], t < N     : (n_t, d, m1, m2) martingale coefficients.
    dK[t], dL[t]    : per-node push increments applied at level t (t < N);
                      the increment computed at a node accrues over [t, t+dt),
                      so cumulative K at a node sums the increments of its
                      strict ancestors and K(root) = 0.
    K[t], L[t]      : cumulative pushes per node (path trees only; on the
                      recombining lattice a state does not determine the path,
                      so the cumulants are left as None).
    """

    tree: object
    spec: GameSpec
    Y: list
    Z: list
    dK: list
    dL: list
    K: list | None = None
    L: list | None = None

    @property
    def root(self) -> np.ndarray:
        """(m1, m2) matrix of root values."""
        return self.Y[0][0]


def _accumulate(tree, increments):
    """Root-to-node cumulative sums of per-level push increments (path tree)."""
    out = [np.zeros((1,) + increments[0].shape[1:])]
    for t in range(tree.N):
        nxt = np.repeat(out[t] + increments[t], tree.branching, axis=0)
        out.append(nxt)
    return out


def rbsde_level_step(tree, t, next_Y, spec: GameSpec, picard_tol=bsde.DEFAULT_PICARD_TOL,
                     proj_tol=DEFAULT_PROJ_TOL):
    """One reflected step for all nodes of level t: BSDE step, then projection."""
    y_raw, z, _ = bsde.bsde_level_step(
        tree, t, next_Y, bsde.DriverFn.from_generator(spec.generator),
        picard_tol=picard_tol,
    )
    y, dK, dL = project_oblique_batch(y_raw, spec.costs, tol=proj_tol)
    return y, z, dK, dL


def rbsde_step(tree, t, node, next_Y, spec: GameSpec, **kw):
    """Single-node reflected step (path trees); returns (y, z, dK, dL)."""
    y, z, dK, dL = rbsde_level_step(tree, t, next_Y, spec, **kw)
    return y[node], z[node], dK[node], dL[node]


def solve_rbsde(spec: GameSpec, tree, picard_tol=bsde.DEFAULT_PICARD_TOL,
                proj_tol=DEFAULT_PROJ_TOL) -> RbsdeSolution:
    """Solve the reflected system on the whole tree.

    Validates the cost structure, checks the terminal matrix lies in the
    constraint region at every leaf (hard error otherwise), then runs the
    reflected backward induction.
    """
    spec.require_valid()
    if tree.recombining and not spec.terminal.markovian:
        raise DataError("the recombining fast path requires a Markovian terminal")
    bsde.check_contraction(tree.dt, spec.generator.lipschitz)

    xi = spec.check_terminal(tree.leaf_w)
    N = tree.N
    Y = [None] * (N + 1)
    Z = [None] * N
    dK = [None] * N
    dL = [None] * N
    Y[N] = xi
    for t in range(N - 1, -1, -1):
        Y[t], Z[t], dK[t], dL[t] = rbsde_level_step(
            tree, t, Y[t + 1], spec, picard_tol=picard_tol, proj_tol=proj_tol
        )
    sol = RbsdeSolution(tree=tree, spec=spec, Y=Y, Z=Z, dK=dK, dL=dL)
    if not tree.recombining:
        sol.K = _accumulate(tree, dK)
        sol.L = _accumulate(tree, dL)
    return sol


def check_minimality(sol: RbsdeSolution, spec: GameSpec | None = None,
                     tol: float = 1e-8, push_tol: float = 1e-9) -> ValidationReport:
    """Every strictly positive push must sit exactly on its barrier.

    For nodes with dK > push_tol the value must equal its upper barrier within
    `tol`; symmetrically for dL and the lower barrier.  Violations are report
    entries, never exceptions.
    """
    spec = spec or sol.spec
    bad = []
    for t in range(sol.tree.N):
        y = sol.Y[t]
        up = upper_barrier(y, spec.costs)
        lo = lower_barrier(y, spec.costs)
        for push, bar, name in ((sol.dK[t], up, "upper"),
                                (sol.dL[t], lo, "lower")):
            gaps = np.abs(y - bar)
            viol = (push > push_tol) & (gaps > tol)
            for n, i, j in np.argwhere(viol):
                bad.append(
                    f"level {t} node {n} mode ({i + 1},{j + 1}): {name} push "
                    f"{push[n, i, j]:g} off the barrier by {gaps[n, i, j]:g}"
                )
    return ValidationReport(tuple(bad))


def domain_report(sol: RbsdeSolution, tol: float = 1e-9) -> ValidationReport:
    """Constraint-region membership of Y at every node."""
    bad = []
    for t, y in enumerate(sol.Y):
        if not in_Qbar(y, sol.spec.costs, tol=tol):
            bad.append(f"level {t}: a value violates the constraint region beyond {tol:g}")
    return ValidationReport(tuple(bad))


def export_rows(sol: RbsdeSolution):
    """Yield one flat record per (node, mode pair) for tabular export.

    Columns: level, node, i, j, W components, Y, Z components, dK, dL,
    cumulative K, cumulative L.  Z/dK/dL are empty strings on leaf rows;
    cumulants are empty when the tree is recombining.
    """
    tree = sol.tree
    d = tree.d
    for t in range(tree.N + 1):
        w = tree.level_w(t)
        y = sol.Y[t]
        n_t, m1, m2 = y.shape
        for n in range(n_t):
            for i in range(m1):
                for j in range(m2):
                    row = [t, n, i + 1, j + 1]
                    row += [repr(float(v)) for v in w[n]]
                    row.append(repr(float(y[n, i, j])))
                    if t < tree.N:
                        row += [repr(float(sol.Z[t][n, p, i, j])) for p in range(d)]
                        row.append(repr(float(sol.dK[t][n, i, j])))
                        row.append(repr(float(sol.dL[t][n, i, j])))
                    else:
                        row += [""] * (d + 2)
                    if sol.K is not None:
                        row.append(repr(float(sol.K[t][n, i, j])))
                        row.append(repr(float(sol.L[t][n, i, j])))
                    else:
                        row += ["", ""]
                    yield row


def export_header(d: int):
    return (["level", "node", "i", "j"]
            + [f"W{p + 1}" for p in range(d)]
            + ["Y"] + [f"Z{p + 1}" for p in range(d)]
            + ["dK", "dL", "K", "L"])
