import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedispatch.errors import EmissionError, EncodingError
from sparsedispatch.milp.formats import emit_lp, emit_mps, parse_lp, parse_mps, sanitize
from sparsedispatch.milp.model import BINARY, LinExpr, MilpModel
from sparsedispatch.milp.relu import count_relu_binaries, encode_network, propagate_bounds
from sparsedispatch.network import LAYERS, SparseNet, forward_scaled, hidden_activations, random_net
from sparsedispatch.solve.adapter import INFEASIBLE, OPTIMAL, run

TINY_LP = """\
\\ Problem: tiny
Minimize
 obj: - 1 x - 1 y
Subject To
 c1: + 1 x + 2 y <= 3
Bounds
 0 <= x <= +inf
 0 <= y <= +inf
End
"""

TINY_MPS = """\
NAME          tiny
ROWS
 N  obj
 L  c1
COLUMNS
    x         obj       -1
    x         c1        1
    y         obj       -1
    y         c1        2
RHS
    RHS       c1        3
BOUNDS
ENDATA
"""


def tiny():
    m = MilpModel("tiny")
    x, y = m.add_var("x"), m.add_var("y")
    m.add_constr(x + 2 * y, "<=", 3, name="c1")
    m.add_objective(-1 * x - y)
    return m


def mixed_model():
    m = MilpModel("mixed")
    a = m.add_var("a", -2.5, 4.0)
    b = m.add_binary("b")
    c = m.add_var("c", -math.inf, math.inf)
    d = m.add_var("d", 1.5, 1.5)
    e = m.add_var("e", -math.inf, 7.0)
    m.add_constr(a + 3 * b - c, ">=", -1.25, name="r_ge")
    m.add_constr(c - 0.1 * d + e, "=", 0.3, name="r_eq", role="tag@1")
    m.add_constr(LinExpr({"a": 1e-7, "e": 1.0}), "<=", 2.0, name="r_le")
    m.add_objective(LinExpr({"a": 1.0, "b": -2.0, "c": 0.5}, const=4.0))
    return m


def fixed_input_model(net, point, eliminate_stable=True):
    m = MilpModel("enc")
    xs = [m.add_var(f"in_{j}", 0.0, 1.0) for j in range(5)]
    for v, p in zip(xs, point):
        m.add_constr(LinExpr({v.name: 1.0}), "=", float(p), name=f"fix_{v.name}")
    y = encode_network(m, net, xs, eliminate_stable=eliminate_stable)
    m.add_objective(LinExpr({y.name: 1.0}))
    return m, y


class TestModel:
    def test_duplicate_names(self):
        m = tiny()
        with pytest.raises(ValueError):
            m.add_var("x")
        with pytest.raises(ValueError):
            m.add_constr(m.var("x"), "<=", 1, name="c1")

    def test_undeclared_variable(self):
        with pytest.raises(KeyError):
            tiny().add_constr(LinExpr({"z": 1.0}), "<=", 1)

    def test_binary_bounds(self):
        m = MilpModel()
        v = m.add_var("b", -3, 5, BINARY)
        assert (v.lb, v.ub) == (0.0, 1.0)

    def test_constants_fold_into_rhs(self):
        m = tiny()
        c = m.add_constr(m.var("x") + 2.0, ">=", m.var("y") - 1.0, name="c2")
        assert c.terms == {"x": 1.0, "y": -1.0} and c.rhs == -3.0

    def test_relax_with_fixing(self):
        m = mixed_model()
        lp = m.relax_integrality(fixed={"b": 0.9999})
        v = lp.var("b")
        assert not lp.has_binaries and v.lb == v.ub == 1.0
        assert m.has_binaries

    def test_violations(self):
        m = tiny()
        assert m.violations({"x": 1.0, "y": 1.0}) == []
        kinds = {k for k, _, _ in m.violations({"x": 3.0, "y": 1.0})}
        assert kinds == {"row"}


class TestEmission:
    def test_lp_fixture(self):
        assert emit_lp(tiny()) == TINY_LP

    def test_mps_fixture(self):
        assert emit_mps(tiny()) == TINY_MPS

    def test_empty_model(self):
        assert emit_lp(MilpModel("empty")) == "\\ Problem: empty\nMinimize\n obj: 0\nSubject To\nBounds\nEnd\n"
        assert emit_mps(MilpModel("empty")) == "NAME          empty\nROWS\n N  obj\nCOLUMNS\nRHS\nBOUNDS\nENDATA\n"

    def test_deterministic_and_order_free(self):
        a = mixed_model()
        b = MilpModel("mixed")
        for name in reversed(list(a.variables)):
            v = a.variables[name]
            b.add_var(name, v.lb, v.ub, v.kind)
        for c in reversed(list(a.constraints.values())):
            b.add_constr(LinExpr(c.terms), c.sense, c.rhs, name=c.name)
        b.add_objective(a.objective)
        assert emit_lp(a) == emit_lp(a) == emit_lp(b)
        assert emit_mps(a) == emit_mps(b)

    @pytest.mark.parametrize("emit, parse", [(emit_lp, parse_lp), (emit_mps, parse_mps)])
    def test_round_trip(self, emit, parse):
        m = mixed_model()
        back = parse(emit(m))
        assert back.canonical() == m.canonical()
        assert back.name == m.name

    @pytest.mark.parametrize("emit, parse", [(emit_lp, parse_lp), (emit_mps, parse_mps)])
    def test_round_trip_network(self, emit, parse):
        m, _ = fixed_input_model(random_net(3, 0.3), np.full(5, 0.5))
        assert parse(emit(m)).canonical() == m.canonical()

    @given(coefs=st.lists(st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v != 0), min_size=3, max_size=3),
           rhs=st.floats(-1e9, 1e9, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_numbers_exact(self, coefs, rhs):
        m = MilpModel("n")
        for i in range(3):
            m.add_var(f"v{i}", -1.0, coefs[i])
        m.add_constr(LinExpr({f"v{i}": c for i, c in enumerate(coefs)}), "<=", rhs, name="r")
        m.add_objective(LinExpr({"v0": coefs[1]}))
        assert parse_mps(emit_mps(m)).canonical() == m.canonical()
        assert parse_lp(emit_lp(m)).canonical() == m.canonical()

    def test_sanitize(self):
        assert sanitize("a-b.c d") == "a_b_c_d"
        assert len(sanitize("x" * 400)) == 255

    def test_collision(self):
        m = MilpModel()
        m.add_var("a-b")
        m.add_var("a.b")
        with pytest.raises(EmissionError):
            emit_lp(m)

    def test_long_names_in_mps(self):
        m = MilpModel("long")
        v = m.add_var("nn_bess_long_name_21_1_12_x", 0, 1)
        m.add_constr(LinExpr({v.name: 1.0}), ">=", 0.5, name="a_rather_long_constraint_name")
        m.add_objective(v)
        assert parse_mps(emit_mps(m)).canonical() == m.canonical()


class TestBounds:
    def test_zero_network(self):
        W = [np.zeros((LAYERS[i + 1], LAYERS[i])) for i in range(3)]
        b = [np.zeros(LAYERS[i + 1]) for i in range(3)]
        box = propagate_bounds(SparseNet(W, b, (np.ones(20), np.ones(10))), [(0, 1)] * 5)
        for iv in box.layers():
            assert not iv.any()

    def test_single_neuron_endpoints(self):
        W = [np.zeros((20, 5)), np.zeros((10, 20)), np.zeros((1, 10))]
        b = [np.zeros(20), np.zeros(10), np.zeros(1)]
        W[0][0, 0] = 2.0
        b[0][0] = -1.0
        box = propagate_bounds(SparseNet(W, b, (np.ones(20), np.ones(10))), [(0, 1)] * 5)
        assert box.layer1[0].tolist() == [-1.0, 1.0]

    def test_masked_neurons_zero(self):
        net = random_net(4, 0.5)
        box = propagate_bounds(net, [(0, 1)] * 5)
        assert not box.layer1[~net.masks[0]].any() and not box.layer2[~net.masks[1]].any()

    @pytest.mark.parametrize("seed, sparsity", [(0, 0.0), (1, 0.5), (2, 0.3)])
    def test_monte_carlo_containment(self, seed, sparsity):
        net = random_net(seed, sparsity)
        box = propagate_bounds(net, [(0, 1)] * 5)
        X = np.random.default_rng(seed).uniform(size=(10_000, 5))
        z1, _, z2, _, out = hidden_activations(net, X)
        for z, iv, m in ((z1, box.layer1, net.masks[0]), (z2, box.layer2, net.masks[1])):
            zz = z[:, m]
            assert np.all(zz >= iv[m, 0] - 1e-12) and np.all(zz <= iv[m, 1] + 1e-12)
        assert np.all(out >= box.output[0, 0] - 1e-12) and np.all(out <= box.output[0, 1] + 1e-12)

    def test_box_outside_unit_cube(self):
        with pytest.raises(EncodingError):
            propagate_bounds(random_net(0), [(0, 1.5)] + [(0, 1)] * 4)


class TestEncoding:
    def scalar_model(self, x_value):
        """Layer-1 neuron 0 with pre-activation x in [-1, 2] and every other neuron masked."""
        W = [np.zeros((20, 5)), np.zeros((10, 20)), np.zeros((1, 10))]
        b = [np.zeros(20), np.zeros(10), np.zeros(1)]
        W[0][0, 0] = 3.0
        b[0][0] = -1.0
        W[1][0, 0] = 1.0
        W[2][0, 0] = 1.0
        m1 = np.zeros(20, bool)
        m1[0] = True
        m2 = np.zeros(10, bool)
        m2[0] = True
        net = SparseNet(W, b, (m1, m2))
        m = MilpModel("scalar")
        xs = [m.add_var(f"in_{j}", 0.0, 1.0) for j in range(5)]
        m.add_constr(LinExpr({"in_0": 1.0}), "=", (x_value + 1.0) / 3.0, name="fix")
        encs = []
        encode_network(m, net, xs, encodings=encs)
        return m, encs

    def test_negative_preactivation_forces_off(self):
        m, encs = self.scalar_model(-0.5)
        e = encs[0]
        assert (e.lb, e.ub, e.m_minus, e.m_plus) == (-1.0, 2.0, 1.0, 2.0)
        lo = run(m)
        m.add_objective(LinExpr({e.a: -1.0}))
        hi = run(m)
        for res in (lo, hi):
            assert res.status == OPTIMAL
            assert res.values[e.a] == pytest.approx(0.0, abs=1e-9)
            assert res.values[e.delta] == pytest.approx(0.0, abs=1e-9)

    def test_positive_preactivation_pins_output(self):
        m, encs = self.scalar_model(2.0)
        e = encs[0]
        res = run(m)
        assert res.values[e.a] == pytest.approx(2.0, abs=1e-9)
        assert res.values[e.delta] == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("case", range(12))
    def test_matches_forward(self, case):
        sparsity = (0.0, 0.3, 0.5, 0.7)[case % 4]
        net = random_net(100 + case, sparsity)
        point = np.random.default_rng(case).uniform(size=5)
        m, y = fixed_input_model(net, point)
        res = run(m)
        assert res.status == OPTIMAL
        assert res.values[y.name] == pytest.approx(forward_scaled(net, point), abs=1e-6)

    def test_lp_relaxation_contains_forward(self):
        net = random_net(7, 0.3)
        point = np.random.default_rng(7).uniform(size=5)
        m, y = fixed_input_model(net, point)
        lp = m.relax_integrality()
        lo = run(lp).objective
        lp.objective = LinExpr({y.name: -1.0})
        hi = -run(lp).objective
        assert lo - 1e-7 <= forward_scaled(net, point) <= hi + 1e-7

    @pytest.mark.parametrize("sparsity", [0.0, 0.5])
    def test_binary_count_law(self, sparsity):
        net = random_net(5, sparsity)
        m, _ = fixed_input_model(net, np.full(5, 0.5))
        encs = []
        m2 = MilpModel()
        xs = [m2.add_var(f"in_{j}", 0.0, 1.0) for j in range(5)]
        encode_network(m2, net, xs, encodings=encs)
        box = propagate_bounds(net, [(0, 1)] * 5)
        unstable = sum(int(((iv[:, 0] < 0) & (iv[:, 1] > 0) & mk).sum())
                       for iv, mk in ((box.layer1, net.masks[0]), (box.layer2, net.masks[1])))
        assert count_relu_binaries(m, "nn") == unstable == len(encs) <= (1 - sparsity) * 30
        assert all(e.lb < 0 < e.ub for e in encs)

    @pytest.mark.parametrize("sparsity, expected", [(0.0, 30), (0.5, 15), (0.3, 21)])
    def test_keep_stable_binaries(self, sparsity, expected):
        m, _ = fixed_input_model(random_net(5, sparsity), np.full(5, 0.5), eliminate_stable=False)
        assert count_relu_binaries(m, "nn") == expected

    def test_keep_stable_still_exact(self):
        net = random_net(9, 0.3)
        point = np.random.default_rng(1).uniform(size=5)
        m, y = fixed_input_model(net, point, eliminate_stable=False)
        assert run(m).values[y.name] == pytest.approx(forward_scaled(net, point), abs=1e-6)

    def test_unbounded_input(self):
        m = MilpModel()
        xs = [m.add_var(f"in_{j}", 0.0, 1.0) for j in range(4)] + [m.add_var("in_4", 0.0, math.inf)]
        with pytest.raises(EncodingError):
            encode_network(m, random_net(0), xs)

    def test_wrong_input_count(self):
        m = MilpModel()
        with pytest.raises(EncodingError):
            encode_network(m, random_net(0), [m.add_var("a", 0, 1)])
