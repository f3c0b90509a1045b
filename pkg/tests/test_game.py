"""Strategies, the switched system, saddle extraction/verification, and the
strategy-enumeration oracles."""

import numpy as np
import pytest

from switchgame import build_tree
from switchgame.errors import DataError, SizingError
from switchgame.game import (
    FeedbackStrategy,
    SwitchedValue,
    _resolve_modes,
    brute_force_value,
    enumerate_feedback_strategies,
    enumerate_player_I_strategies,
    eval_switched,
    extract_saddle,
    greedy_strategy,
    simulate_path,
    solve_lower_reflected,
    verify_saddle,
)
from switchgame.model import CostTables, GameSpec, GeneratorSpec, TerminalSpec
from switchgame.reflected import RbsdeSolution, solve_rbsde

from conftest import make_standard, standard_costs


def resolve_oracle(a_tbl, b_tbl, node, i, j, k, l, cap):
    """Scalar re-implementation of the within-step mode settlement: alternate
    reading the two tables, Player I first, until neither moves.  Returns the
    final modes, both charged costs, and the event list [('I'|'II', frm, to)].
    """
    events = []
    costA = costB = 0.0
    switches = 0
    while switches < cap:
        moved = False
        ni = int(a_tbl[node, i, j])
        if ni != i:
            events.append(("I", i, ni))
            costA += k[i, ni]
            i = ni
            moved = True
            switches += 1
        if switches < cap:
            nj = int(b_tbl[node, i, j])
            if nj != j:
                events.append(("II", j, nj))
                costB += l[j, nj]
                j = nj
                moved = True
                switches += 1
        if not moved:
            break
    return i, j, costA, costB, events


class TestModeResolution:
    def test_matches_scalar_oracle_on_random_tables(self, rng):
        k = np.array(standard_costs().k)
        l = np.array(standard_costs().l)
        for _ in range(200):
            n_t = int(rng.integers(1, 5))
            A = rng.integers(0, 2, (n_t, 2, 2))
            B = rng.integers(0, 2, (n_t, 2, 2))
            n_idx = np.arange(n_t)[:, None, None]
            ci, cj, cA, cB = _resolve_modes(A, B, n_idx, 2, 2, k, l)
            for n in range(n_t):
                for i in range(2):
                    for j in range(2):
                        oi, oj, oA, oB, _ = resolve_oracle(A, B, n, i, j, k, l, 16)
                        assert (ci[n, i, j], cj[n, i, j]) == (oi, oj)
                        assert cA[n, i, j] == pytest.approx(oA)
                        assert cB[n, i, j] == pytest.approx(oB)

    def test_chain_cost_dominates_direct_switch(self, rng):
        # consequence of the strict triangle inequalities: a settled chain
        # never beats the direct switch to the same final mode, and a chain
        # with a repeated-player switch is strictly more expensive
        k = np.array(standard_costs().k)
        l = np.array(standard_costs().l)
        for _ in range(300):
            A = rng.integers(0, 2, (1, 2, 2))
            B = rng.integers(0, 2, (1, 2, 2))
            for i in range(2):
                for j in range(2):
                    fi, fj, cA, cB, events = resolve_oracle(A, B, 0, i, j, k, l, 16)
                    direct_A = 0.0 if fi == i else k[i, fi]
                    direct_B = 0.0 if fj == j else l[j, fj]
                    assert cA >= direct_A - 1e-12
                    assert cB >= direct_B - 1e-12
                    if sum(e[0] == "I" for e in events) >= 2:
                        assert cA > direct_A
                    if sum(e[0] == "II" for e in events) >= 2:
                        assert cB > direct_B

    def test_stay_tables_never_move(self):
        tree = build_tree(2, 1, 1.0)
        a = FeedbackStrategy.stay("I", tree, 2, 2)
        b = FeedbackStrategy.stay("II", tree, 2, 2)
        n_idx = np.arange(1)[:, None, None]
        ci, cj, cA, cB = _resolve_modes(a.actions[0], b.actions[0], n_idx, 2, 2,
                                        np.array(standard_costs().k),
                                        np.array(standard_costs().l))
        np.testing.assert_array_equal(ci[0], [[0, 0], [1, 1]])
        np.testing.assert_array_equal(cj[0], [[0, 1], [0, 1]])
        assert not cA.any() and not cB.any()


class TestEvalSwitched:
    def test_stay_pair_is_plain_expectation(self, standard_spec):
        spec = make_standard(driver="zero")
        tree = build_tree(3, 1, spec.horizon)
        a = FeedbackStrategy.stay("I", tree, 2, 2)
        b = FeedbackStrategy.stay("II", tree, 2, 2)
        val = eval_switched(spec, tree, a, b)
        xi = spec.check_terminal(tree.leaf_w)
        np.testing.assert_allclose(val.root(), xi.mean(axis=0), atol=1e-12)

    def test_single_switch_adds_one_cost(self):
        spec = make_standard(driver="zero")
        tree = build_tree(3, 1, spec.horizon)
        a = FeedbackStrategy.constant("I", tree, 2, 2, 1)  # always hold mode 2
        b = FeedbackStrategy.stay("II", tree, 2, 2)
        val = eval_switched(spec, tree, a, b)
        xi = spec.check_terminal(tree.leaf_w)
        for j in range(2):
            assert val.root((0, j)) == pytest.approx(xi.mean(axis=0)[1, j] + 1.0)
            assert val.root((1, j)) == pytest.approx(xi.mean(axis=0)[1, j])

    def test_player_II_switch_subtracts_cost(self):
        spec = make_standard(driver="zero")
        tree = build_tree(2, 1, spec.horizon)
        a = FeedbackStrategy.stay("I", tree, 2, 2)
        b = FeedbackStrategy.constant("II", tree, 2, 2, 0)
        val = eval_switched(spec, tree, a, b)
        xi = spec.check_terminal(tree.leaf_w)
        assert val.root((0, 1)) == pytest.approx(xi.mean(axis=0)[0, 0] - 0.8)

    def test_forward_backward_equivalence(self, rng, standard_spec):
        # backward evaluation must equal the forward oracle: average over all
        # paths of terminal value + sum of driver contributions + cost delta
        tree = build_tree(3, 1, standard_spec.horizon)
        c = standard_spec.generator.c
        xi = standard_spec.check_terminal(tree.leaf_w)
        for _ in range(5):
            a = FeedbackStrategy.random("I", tree, 2, 2, rng)
            b = FeedbackStrategy.random("II", tree, 2, 2, rng)
            val = eval_switched(standard_spec, tree, a, b)
            for start in [(0, 0), (0, 1), (1, 0), (1, 1)]:
                total = 0.0
                for path in range(2 ** 3):
                    branches = [(path >> t) & 1 for t in range(3)]
                    nodes, modes, A, B = simulate_path(
                        standard_spec, tree, a, b, start, branches)
                    drift = sum(tree.dt * c[modes[t + 1]] for t in range(3))
                    total += xi[nodes[-1], modes[-1][0], modes[-1][1]] \
                        + drift + A[-1] - B[-1]
                total /= 2 ** 3
                assert val.root(start) == pytest.approx(total, abs=1e-10)

    def test_cost_accounting_is_exact(self, rng, standard_spec):
        tree = build_tree(4, 1, standard_spec.horizon)
        k = np.array(standard_costs().k)
        l = np.array(standard_costs().l)
        for _ in range(10):
            a = FeedbackStrategy.random("I", tree, 2, 2, rng)
            b = FeedbackStrategy.random("II", tree, 2, 2, rng)
            branches = rng.integers(0, 2, 4)
            nodes, modes, A, B = simulate_path(standard_spec, tree, a, b, (0, 0),
                                               branches)
            i, j = 0, 0
            expA = expB = 0.0
            for t in range(4):
                fi, fj, _, _, events = resolve_oracle(
                    a.actions[t], b.actions[t], nodes[t], i, j, k, l, 16)
                # replay the additions event by event so the float sums match
                # the simulator's bit for bit
                for who, frm, to in events:
                    if who == "I":
                        expA += k[frm, to]
                    else:
                        expB += l[frm, to]
                i, j = fi, fj
                assert modes[t + 1] == (fi, fj)
                assert A[t + 1] == expA  # exact, no tolerance
                assert B[t + 1] == expB
            # cumulative costs never decrease
            assert all(x2 >= x1 for x1, x2 in zip(A, A[1:]))
            assert all(x2 >= x1 for x1, x2 in zip(B, B[1:]))

    def test_player_order_is_checked(self, standard_spec):
        tree = build_tree(2, 1, standard_spec.horizon)
        a = FeedbackStrategy.stay("I", tree, 2, 2)
        with pytest.raises(DataError):
            eval_switched(standard_spec, tree, a, a)


class TestSaddle:
    def test_interior_solution_yields_stay_strategies(self):
        spec = GameSpec(
            costs=standard_costs(),
            generator=GeneratorSpec("zero", 2, 2),
            terminal=TerminalSpec("constant", 2, 2, alpha=[[0.1, 0.2], [0.0, 0.1]]),
            horizon=1.0,
        )
        tree = build_tree(3, 1, 1.0)
        sol = solve_rbsde(spec, tree)
        a_star, b_star = extract_saddle(sol)
        stay_a = FeedbackStrategy.stay("I", tree, 2, 2)
        stay_b = FeedbackStrategy.stay("II", tree, 2, 2)
        for t in range(3):
            np.testing.assert_array_equal(a_star.actions[t], stay_a.actions[t])
            np.testing.assert_array_equal(b_star.actions[t], stay_b.actions[t])

    def test_simultaneous_trigger_tie_rule(self, standard_spec):
        # Y[0][0] sits on both barriers at (1,1): Player I must switch and
        # Player II must stay there
        tree = build_tree(1, 1, standard_spec.horizon)
        y0 = np.array([[[0.0, 0.8], [-1.0, 0.0]]])
        y1 = np.zeros((2, 2, 2))
        zeros = [np.zeros((1, 1, 2, 2))]
        sol = RbsdeSolution(tree=tree, spec=standard_spec, Y=[y0, y1], Z=zeros,
                            dK=[np.zeros((1, 2, 2))], dL=[np.zeros((1, 2, 2))])
        a_star, b_star = extract_saddle(sol)
        assert a_star.actions[0][0, 0, 0] == 1   # fires: on the upper barrier
        assert b_star.actions[0][0, 0, 0] == 0   # would fire, but I wins ties

    def test_verify_saddle_on_small_instance(self, standard_spec):
        tree = build_tree(3, 1, standard_spec.horizon)
        sol = solve_rbsde(standard_spec, tree)
        report = verify_saddle(standard_spec, tree, sol, catalog_size=30, seed=7)
        assert report.ok
        assert max(report.value_gap.values()) <= 1e-8
        assert report.catalog_size_I == report.catalog_size_II == 34

    def test_corrupted_solution_is_flagged_with_strategies(self, standard_spec):
        tree = build_tree(3, 1, standard_spec.horizon)
        sol = solve_rbsde(standard_spec, tree)
        sol.Y[0] = sol.Y[0] + 0.25
        report = verify_saddle(standard_spec, tree, sol, catalog_size=10, seed=7)
        assert not report.ok
        kinds = {v[0] for v in report.violations}
        assert "value" in kinds or "lower" in kinds or "upper" in kinds

    def test_greedy_strategy_shapes(self, standard_spec):
        tree = build_tree(2, 1, standard_spec.horizon)
        sol = solve_rbsde(standard_spec, tree)
        g = greedy_strategy(sol, "I")
        assert g.player == "I"
        assert [a.shape for a in g.actions] == [(1, 2, 2), (2, 2, 2)]

    def test_strategy_serialization_rows(self, standard_spec):
        tree = build_tree(2, 1, standard_spec.horizon)
        b = FeedbackStrategy.stay("II", tree, 2, 2)
        rows = list(b.serialize_rows())
        assert len(rows) == (1 + 2) * 4
        assert rows[0] == [0, 0, 1, 1, 1]


class TestRepresentation:
    def test_lower_reflected_requires_j_uniform_player_I(self, standard_spec, rng):
        tree = build_tree(2, 1, standard_spec.horizon)
        acts = [rng.integers(0, 2, (tree.level_size(t), 2, 2)) for t in range(2)]
        acts[0][0, 0, 0], acts[0][0, 0, 1] = 0, 1  # depends on j
        a = FeedbackStrategy("I", acts)
        with pytest.raises(DataError, match="j-independent"):
            solve_lower_reflected(standard_spec, tree, a)
        with pytest.raises(DataError, match="Player-I"):
            solve_lower_reflected(standard_spec, tree,
                                  FeedbackStrategy.stay("II", tree, 2, 2))

    def test_degenerate_single_opponent_mode(self):
        # m2 = 1: no lower constraints; the representation solve is just the
        # switched evaluation against the only Player-II strategy
        costs = CostTables(k=[[0.0, 1.0], [1.0, 0.0]], l=[[0.0]])
        spec = GameSpec(
            costs=costs,
            generator=GeneratorSpec("mode_constant", 2, 1, c=[[1.0], [-1.0]]),
            terminal=TerminalSpec("affine", 2, 1, alpha=[[0.2], [-0.1]],
                                  beta=[[0.5], [0.5]]),
            horizon=0.5,
        )
        tree = build_tree(3, 1, 0.5)
        a = FeedbackStrategy.constant("I", tree, 2, 1, 0)
        U = solve_lower_reflected(spec, tree, a)
        val = eval_switched(spec, tree, a, FeedbackStrategy.stay("II", tree, 2, 1))
        for t in range(4):
            np.testing.assert_allclose(U[t], val.U[t], atol=1e-12)

    def test_frozen_push_variant_runs(self, standard_spec):
        tree = build_tree(2, 1, standard_spec.horizon)
        sol = solve_rbsde(standard_spec, tree)
        a = FeedbackStrategy.stay("I", tree, 2, 2)
        U = solve_lower_reflected(standard_spec, tree, a, frozen_dL=sol.dL)
        assert U[0].shape == (1, 2, 2)

    def test_single_step_hand_recursion(self):
        # N=1, 2x1: the best strategy picks the cheaper of "stay" and
        # "switch now", each worth E[xi] + dt*c + switching cost
        costs = CostTables(k=[[0.0, 1.0], [1.0, 0.0]], l=[[0.0]])
        spec = GameSpec(
            costs=costs,
            generator=GeneratorSpec("mode_constant", 2, 1, c=[[2.0], [-2.0]]),
            terminal=TerminalSpec("affine", 2, 1, alpha=[[0.4], [0.0]],
                                  beta=[[0.3], [0.3]]),
            horizon=0.5,
        )
        tree = build_tree(1, 1, 0.5)
        xi = spec.check_terminal(tree.leaf_w)
        E = xi.mean(axis=0)
        by_hand = np.empty((2, 1))
        for i in range(2):
            stay = E[i, 0] + 0.5 * spec.generator.c[i, 0]
            other = E[1 - i, 0] + 0.5 * spec.generator.c[1 - i, 0] + 1.0
            by_hand[i, 0] = min(stay, other)
        np.testing.assert_allclose(brute_force_value(spec, tree), by_hand,
                                   atol=1e-12)

    def test_constant_interior_terminal_never_switches(self):
        spec = GameSpec(
            costs=standard_costs(),
            generator=GeneratorSpec("zero", 2, 2),
            terminal=TerminalSpec("constant", 2, 2, alpha=[[0.1, 0.2], [0.0, 0.1]]),
            horizon=1.0,
        )
        tree = build_tree(2, 1, 1.0)
        np.testing.assert_allclose(brute_force_value(spec, tree),
                                   [[0.1, 0.2], [0.0, 0.1]], atol=1e-10)

    def test_caps_are_enforced(self, standard_spec):
        tree = build_tree(4, 1, standard_spec.horizon)
        with pytest.raises(SizingError, match="capped"):
            brute_force_value(standard_spec, tree)

    def test_enumeration_counts(self, standard_spec):
        tree = build_tree(1, 1, standard_spec.horizon)
        assert sum(1 for _ in enumerate_player_I_strategies(tree, 2, 2)) == 2 ** 2
        assert sum(1 for _ in enumerate_feedback_strategies(tree, "II", 2, 2)) == 2 ** 4
