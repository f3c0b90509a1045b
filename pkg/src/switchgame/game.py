"""Switching strategies, the switched BSDE, and the saddle-point machinery.

A feedback strategy is an action table over (node, i, j): on a path tree the
node is exactly the Brownian history, so feedback tables represent every
adapted strategy.  Actions equal to the player's own current mode mean
"stay".

Within a step the two action tables are resolved at the step's left endpoint
by an alternating read-out with Player I first: I acts on the current pair,
II acts on the post-I pair, and the alternation repeats until neither table
asks for a further switch.  Such same-instant chains are essential, not a
corner case: when a switch lands on a coordinate that itself sits on a
barrier, the reflected system reacts at the same time point, and the saddle
strategies realize that reaction as a cascade of switches at one node (every
leg charged its cost).  The no-zero-cost-loop hypothesis guarantees the
cascades of the extracted saddle strategies terminate; adversarially cyclic
tables are cut off by a switch-count cap and only pay for the detour.  The
BSDE step then runs under the settled pair, and the switch costs are
charged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import bsde
from .errors import DataError, SizingError
from .model import GameSpec, lower_barrier, project_oblique_batch, upper_barrier
from .reflected import RbsdeSolution

BRUTE_FORCE_MAX_STEPS = 3
BRUTE_FORCE_MAX_MODES = 4


@dataclass
class FeedbackStrategy:
    """Per-level action tables for one player.

    actions[t] is an integer array (n_t, m1, m2): the player's next mode when
    the tree sits at node n of level t with current modes (i, j).  Leaf
    actions do not exist (no switching at the horizon).
    """

    player: str  # "I" or "II"
    actions: list

    def __post_init__(self):
        if self.player not in ("I", "II"):
            raise DataError("player must be 'I' or 'II'")

    @classmethod
    def stay(cls, player, tree, m1, m2):
        grid = np.arange(m1)[:, None] if player == "I" else np.arange(m2)[None, :]
        acts = [
            np.broadcast_to(grid, (tree.level_size(t), m1, m2)).copy().astype(int)
            for t in range(tree.N)
        ]
        return cls(player, acts)

    @classmethod
    def constant(cls, player, tree, m1, m2, mode):
        acts = [
            np.full((tree.level_size(t), m1, m2), mode, dtype=int)
            for t in range(tree.N)
        ]
        return cls(player, acts)

    @classmethod
    def random(cls, player, tree, m1, m2, rng):
        hi = m1 if player == "I" else m2
        acts = [
            rng.integers(0, hi, size=(tree.level_size(t), m1, m2))
            for t in range(tree.N)
        ]
        return cls(player, acts)

    def j_uniform(self) -> bool:
        """True when the action never depends on the opponent coordinate."""
        axis = 2 if self.player == "I" else 1
        return all(np.all(a == a.take([0], axis=axis)) for a in self.actions)

    def serialize_rows(self):
        """Flat (level, node, i, j, action) records for counterexample replay."""
        for t, a in enumerate(self.actions):
            n_t, m1, m2 = a.shape
            for n in range(n_t):
                for i in range(m1):
                    for j in range(m2):
                        yield [t, n, i + 1, j + 1, int(a[n, i, j]) + 1]


@dataclass
class SwitchedValue:
    """Value field of the switched BSDE under a fixed strategy pair."""

    tree: object
    U: list  # per level, (n_t, m1, m2): payoff given current modes (i, j)

    def root(self, start=None):
        if start is None:
            return self.U[0][0]
        i, j = start
        return float(self.U[0][0, i, j])


def _resolve_modes(A, B, n_idx, m1, m2, k, l):
    """Settle one step's mode pair from both action tables.

    Alternating read-out with Player I first: each player in turn reads its
    table at the current pair and switches if the read differs, repeated
    until neither player moves.  A player whose table keeps moving is cut
    off after 4*m1*m2 switches (only adversarially cyclic tables hit the
    cap; every switch costs, so cyclists only hurt themselves).  Returns the
    settled (i, j) tables and each player's accumulated switch cost, all
    shaped like A.
    """
    cap = 4 * m1 * m2
    ci = np.broadcast_to(np.arange(m1)[None, :, None], A.shape).copy()
    cj = np.broadcast_to(np.arange(m2)[None, None, :], A.shape).copy()
    costA = np.zeros(A.shape)
    costB = np.zeros(A.shape)
    switches = np.zeros(A.shape, dtype=int)
    for _ in range(cap + 1):
        ni = A[n_idx, ci, cj]
        movI = (ni != ci) & (switches < cap)
        costA += np.where(movI, k[ci, ni], 0.0)
        ci = np.where(movI, ni, ci)
        switches += movI
        nj = B[n_idx, ci, cj]
        movJ = (nj != cj) & (switches < cap)
        costB += np.where(movJ, l[cj, nj], 0.0)
        cj = np.where(movJ, nj, cj)
        switches += movJ
        if not (movI.any() or movJ.any()):
            break
    return ci, cj, costA, costB


def eval_switched(spec: GameSpec, tree, a: FeedbackStrategy, b: FeedbackStrategy,
                  picard_tol=bsde.DEFAULT_PICARD_TOL) -> SwitchedValue:
    """Backward evaluation of the switched BSDE for every start mode pair.

    At each (node, i, j) the mode pair settles by the alternating read-out
    (Player I first, repeated until neither table moves), the implicit step
    runs with the driver at the settled pair over that pair's continuation
    values, then Player I's accumulated cost is added and Player II's
    subtracted.
    """
    if a.player != "I" or b.player != "II":
        raise DataError("eval_switched expects (Player-I strategy, Player-II strategy)")
    bsde.check_contraction(tree.dt, spec.generator.lipschitz)
    m1, m2 = spec.m1, spec.m2
    gen = spec.generator
    k, l = spec.costs.k, spec.costs.l

    U = [None] * (tree.N + 1)
    U[tree.N] = spec.check_terminal(tree.leaf_w)
    for t in range(tree.N - 1, -1, -1):
        E = tree.expect_next(t, U[t + 1])          # (n, m1, m2)
        Z = tree.z_next(t, U[t + 1])               # (n, d, m1, m2)
        n_t = E.shape[0]
        n_idx = np.arange(n_t)[:, None, None]
        i_fin, j_fin, costA, costB = _resolve_modes(
            a.actions[t], b.actions[t], n_idx, m1, m2, k, l
        )
        Eg = E[n_idx, i_fin, j_fin]                  # continuation at settled modes
        Zg = np.moveaxis(Z, 1, -1)[n_idx, i_fin, j_fin]   # (n, m1, m2, d)
        w = tree.level_w(t)
        time = tree.time(t)

        y, _ = bsde.picard_solve(
            Eg,
            lambda y: tree.dt * np.asarray(
                gen.at_modes(time, w, y, Zg, i_fin, j_fin), dtype=float
            ),
            picard_tol=picard_tol,
        )
        U[t] = y + costA - costB
    return SwitchedValue(tree=tree, U=U)


def simulate_path(spec: GameSpec, tree, a: FeedbackStrategy, b: FeedbackStrategy,
                  start, branches):
    """Forward mode/cost bookkeeping along one concrete path (path trees).

    `branches` is a length-N sequence of branch indices.  Returns the visited
    nodes, the mode pair after each step, and the cumulative cost processes
    A (Player I) and B (Player II) sampled after each step.
    """
    if tree.recombining:
        raise DataError("forward simulation requires a path tree")
    i, j = start
    node = 0
    nodes, modes, A, B = [0], [(i, j)], [0.0], [0.0]
    cumA = cumB = 0.0
    cap = 4 * spec.m1 * spec.m2
    for t, c in enumerate(branches):
        moved, switches = True, 0
        while moved and switches < cap:
            moved = False
            ni = int(a.actions[t][node, i, j])
            if ni != i:
                cumA += spec.costs.k[i, ni]
                i, moved = ni, True
                switches += 1
            nj = int(b.actions[t][node, i, j])
            if nj != j and switches < cap:
                cumB += spec.costs.l[j, nj]
                j, moved = nj, True
                switches += 1
        node = node * tree.branching + int(c)
        nodes.append(node)
        modes.append((i, j))
        A.append(cumA)
        B.append(cumB)
    return nodes, modes, A, B


# ---------------------------------------------------------------------------
# Saddle extraction and verification
# ---------------------------------------------------------------------------

def _argmin_upper(y, costs):
    """Per coordinate (i, j): the i' != i minimizing y[i', j] + k(i, i')."""
    m1 = costs.m1
    shifted = y[..., None, :, :] + costs.k[:, :, None]
    eye = np.eye(m1, dtype=bool)
    shifted = np.where(eye[:, :, None], np.inf, shifted)
    return shifted.argmin(axis=-2)


def _argmax_lower(y, costs):
    m2 = costs.m2
    shifted = y[..., :, None, :] - costs.l[None, :, :]
    eye = np.eye(m2, dtype=bool)
    shifted = np.where(eye[None, :, :], -np.inf, shifted)
    return shifted.argmax(axis=-1)


def extract_saddle(sol: RbsdeSolution, spec: GameSpec | None = None,
                   tol: float = 1e-9):
    """Candidate saddle strategies from the solved value field.

    Player I's trigger fires when the value sits on its upper barrier (within
    tol); Player II's when it sits on its lower barrier.  When both fire at
    once, Player I switches and Player II stays.  Switch targets are the
    barrier argmin/argmax, smallest index on ties.
    """
    spec = spec or sol.spec
    tree = sol.tree
    m1, m2 = spec.m1, spec.m2
    acts_I, acts_II = [], []
    for t in range(tree.N):
        y = sol.Y[t]
        up = upper_barrier(y, spec.costs)
        lo = lower_barrier(y, spec.costs)
        fire_I = y >= up - tol
        fire_II = (y <= lo + tol) & ~fire_I
        stay_I = np.broadcast_to(np.arange(m1)[None, :, None], y.shape)
        stay_II = np.broadcast_to(np.arange(m2)[None, None, :], y.shape)
        if m1 > 1:
            tgt_I = _argmin_upper(y, spec.costs)
            acts_I.append(np.where(fire_I, tgt_I, stay_I).astype(int))
        else:
            acts_I.append(stay_I.copy().astype(int))
        if m2 > 1:
            tgt_II = _argmax_lower(y, spec.costs)
            acts_II.append(np.where(fire_II, tgt_II, stay_II).astype(int))
        else:
            acts_II.append(stay_II.copy().astype(int))
    return (FeedbackStrategy("I", acts_I), FeedbackStrategy("II", acts_II))


def greedy_strategy(sol: RbsdeSolution, player: str) -> FeedbackStrategy:
    """Myopic strategy: switch whenever the barrier move looks immediately
    profitable on the solved value field, ignoring future consequences."""
    spec = sol.spec
    tree = sol.tree
    acts = []
    for t in range(tree.N):
        y = sol.Y[t]
        if player == "I":
            if spec.m1 == 1:
                acts.append(FeedbackStrategy.stay("I", tree, 1, spec.m2).actions[t])
                continue
            bar = upper_barrier(y, spec.costs)
            tgt = _argmin_upper(y, spec.costs)
            stay = np.broadcast_to(np.arange(spec.m1)[None, :, None], y.shape)
            acts.append(np.where(bar < y, tgt, stay).astype(int))
        else:
            if spec.m2 == 1:
                acts.append(FeedbackStrategy.stay("II", tree, spec.m1, 1).actions[t])
                continue
            bar = lower_barrier(y, spec.costs)
            tgt = _argmax_lower(y, spec.costs)
            stay = np.broadcast_to(np.arange(spec.m2)[None, None, :], y.shape)
            acts.append(np.where(bar > y, tgt, stay).astype(int))
    return FeedbackStrategy(player, acts)


@dataclass
class SaddleReport:
    """Outcome of the saddle verification sweep."""

    value_gap: dict            # start pair -> |U(a*, b*) - Y(root)|
    violations: list           # (kind, strategy_id, start, slack, strategy)
    catalog_size_I: int
    catalog_size_II: int

    @property
    def ok(self) -> bool:
        return not self.violations


def _catalog(sol, player, catalog_size, rng):
    spec, tree = sol.spec, sol.tree
    m1, m2 = spec.m1, spec.m2
    out = [("stay", FeedbackStrategy.stay(player, tree, m1, m2))]
    count = m1 if player == "I" else m2
    for mode in range(count):
        out.append((f"constant_{mode + 1}", FeedbackStrategy.constant(player, tree, m1, m2, mode)))
    out.append(("greedy", greedy_strategy(sol, player)))
    for s in range(catalog_size):
        out.append((f"random_{s}", FeedbackStrategy.random(player, tree, m1, m2, rng)))
    return out


def verify_saddle(spec: GameSpec, tree, sol: RbsdeSolution, catalog_size: int = 200,
                  seed: int = 0, tol: float = 1e-8) -> SaddleReport:
    """Check the saddle inequalities against a strategy catalog.

    Asserts, per start mode pair: |U(a*, b*) - Y(root)| <= tol; for every
    catalog Player-II strategy b, U(a*, b) <= Y(root) + tol; for every catalog
    Player-I strategy a, U(a, b*) >= Y(root) - tol.  The catalog always
    contains the stay, all constant-mode, and the greedy strategies plus
    seeded random ones.  Violations carry the serialized strategy for replay.
    """
    spec.require_valid()
    a_star, b_star = extract_saddle(sol, spec)
    root_Y = sol.root
    value = eval_switched(spec, tree, a_star, b_star)
    gaps = {}
    violations = []
    for i in range(spec.m1):
        for j in range(spec.m2):
            gap = abs(value.root((i, j)) - root_Y[i, j])
            gaps[(i, j)] = gap
            if gap > tol:
                violations.append(("value", "saddle_pair", (i, j), gap, None))

    rng = np.random.default_rng(seed)
    cat_II = _catalog(sol, "II", catalog_size, rng)
    cat_I = _catalog(sol, "I", catalog_size, rng)
    for name, b in cat_II:
        u = eval_switched(spec, tree, a_star, b)
        for i in range(spec.m1):
            for j in range(spec.m2):
                slack = u.root((i, j)) - root_Y[i, j]
                if slack > tol:
                    violations.append(("upper", name, (i, j), slack, b))
    for name, a in cat_I:
        u = eval_switched(spec, tree, a, b_star)
        for i in range(spec.m1):
            for j in range(spec.m2):
                slack = root_Y[i, j] - u.root((i, j))
                if slack > tol:
                    violations.append(("lower", name, (i, j), slack, a))
    return SaddleReport(
        value_gap=gaps, violations=violations,
        catalog_size_I=len(cat_I), catalog_size_II=len(cat_II),
    )


# ---------------------------------------------------------------------------
# The representation route: lower-reflected systems and brute force
# ---------------------------------------------------------------------------

def solve_lower_reflected(spec: GameSpec, tree, a: FeedbackStrategy,
                          picard_tol=bsde.DEFAULT_PICARD_TOL,
                          proj_tol=1e-12, frozen_dL=None):
    """Solve the Player-II-reflected system under a fixed Player-I strategy.

    The strategy must not read the opponent coordinate (its action table is
    constant across j).  Each step: continuation at the strategy's mode
    choice, driver at that mode, Player-I switch cost, then the lower (l)
    barriers are enforced by upward projection with the system's own minimal
    push.  With `frozen_dL` (per-level increments from a reflected solution)
    the projection is replaced by adding the given pushes at the switched
    coordinate, for comparison runs only.

    Returns the list of per-level (n_t, m1, m2) value fields.
    """
    if a.player != "I":
        raise DataError("expected a Player-I strategy")
    if not a.j_uniform():
        raise DataError("the representation route needs a j-independent strategy")
    bsde.check_contraction(tree.dt, spec.generator.lipschitz)
    gen = spec.generator
    k = spec.costs.k
    m1, m2 = spec.m1, spec.m2
    i_grid = np.arange(m1)[:, None]

    U = [None] * (tree.N + 1)
    U[tree.N] = spec.check_terminal(tree.leaf_w)
    for t in range(tree.N - 1, -1, -1):
        E = tree.expect_next(t, U[t + 1])
        Z = tree.z_next(t, U[t + 1])
        n_t = E.shape[0]
        ia = a.actions[t]                           # (n, m1, m2), j-uniform
        jb = np.broadcast_to(np.arange(m2)[None, None, :], ia.shape)
        n_idx = np.arange(n_t)[:, None, None]
        Eg = E[n_idx, ia, jb]
        Zg = np.moveaxis(Z, 1, -1)[n_idx, ia, jb]
        w = tree.level_w(t)
        time = tree.time(t)
        y, _ = bsde.picard_solve(
            Eg,
            lambda y: tree.dt * np.asarray(
                gen.at_modes(time, w, y, Zg, ia, jb), dtype=float
            ),
            picard_tol=picard_tol,
        )
        y = y + k[i_grid, ia]
        if frozen_dL is None:
            y, _, _ = project_oblique_batch(y, spec.costs, tol=proj_tol, lower_only=True)
        else:
            y = y + frozen_dL[t][n_idx, ia, jb]
        U[t] = y
    return U


def _interior_sizes(tree):
    return [tree.level_size(t) for t in range(tree.N)]


def enumerate_player_I_strategies(tree, m1, m2):
    """All j-independent Player-I feedback strategies on the tree.

    One mode choice per (interior node, current i); the count is
    m1 ** (num_interior_nodes * m1), so callers must respect the brute-force
    caps.
    """
    sizes = _interior_sizes(tree)
    slots = sum(sizes) * m1
    for combo in itertools.product(range(m1), repeat=slots):
        acts = []
        pos = 0
        for t, n_t in enumerate(sizes):
            block = np.array(combo[pos:pos + n_t * m1], dtype=int).reshape(n_t, m1)
            pos += n_t * m1
            acts.append(np.repeat(block[:, :, None], m2, axis=2))
        yield FeedbackStrategy("I", acts)


def enumerate_feedback_strategies(tree, player, m1, m2):
    """All feedback strategies (node, i, j) -> mode for one player."""
    sizes = _interior_sizes(tree)
    hi = m1 if player == "I" else m2
    slots = sum(sizes) * m1 * m2
    for combo in itertools.product(range(hi), repeat=slots):
        acts = []
        pos = 0
        for n_t in sizes:
            block = np.array(combo[pos:pos + n_t * m1 * m2], dtype=int)
            pos += n_t * m1 * m2
            acts.append(block.reshape(n_t, m1, m2))
        yield FeedbackStrategy(player, acts)


def brute_force_value(spec: GameSpec, tree, start=None,
                      max_steps: int = BRUTE_FORCE_MAX_STEPS,
                      max_modes: int = BRUTE_FORCE_MAX_MODES, **kw):
    """Exhaustive minimum over Player-I strategies of the lower-reflected solve.

    Returns the (m1, m2) matrix of root values (or the scalar for `start`).
    This is the independent oracle for the representation theorem; it never
    calls the direct reflected solver.
    """
    if tree.N > max_steps or spec.m1 * spec.m2 > max_modes:
        raise SizingError(
            f"brute force capped at N <= {max_steps} and m1*m2 <= {max_modes}; "
            f"got N={tree.N}, m1*m2={spec.m1 * spec.m2}"
        )
    spec.require_valid()
    best = None
    for a in enumerate_player_I_strategies(tree, spec.m1, spec.m2):
        root = solve_lower_reflected(spec, tree, a, **kw)[0][0]
        best = root.copy() if best is None else np.minimum(best, root)
    if start is None:
        return best
    return float(best[start[0], start[1]])
