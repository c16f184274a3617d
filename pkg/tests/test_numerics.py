import numpy as np
import pytest
from scipy import sparse

from keyword_ctr import ContractError, NumericalError
from keyword_ctr import numerics as nx


def check_gradient(build, inputs, seed=0, tol=1e-6):
    """
    Compare forward_backward with central differences for a loss
    sum(build(*nodes) * W) with random weights W.
    """
    rng = np.random.default_rng(seed)
    params = {'x{}'.format(i): np.array(v, dtype=np.float64) for i, v in enumerate(inputs)}
    shape_record = nx.ComputationRecord()
    shape = build(*[shape_record.constant(v) for v in params.values()]).shape
    weights = rng.normal(size=shape)

    def loss(record):
        nodes = [record.parameter(name, value) for name, value in params.items()]
        out = build(*nodes)
        return nx.reduce_sum(nx.multiply(out, record.constant(weights)))

    record = nx.ComputationRecord()
    analytic = nx.forward_backward(record, loss(record))
    numeric = nx.finite_difference_gradient(lambda _: loss(nx.ComputationRecord()).value, params)
    for name in params:
        assert nx.relative_error(analytic[name], numeric[name]) < tol, name


class TestPrimitiveGradients:
    """Every primitive against central differences on inputs of magnitude <= 10."""

    rng = np.random.default_rng(1)

    def uniform(self, *shape, low=-10.0, high=10.0):
        return self.rng.uniform(low, high, size=shape)

    def test_add_with_broadcast(self):
        check_gradient(nx.add, [self.uniform(3, 4), self.uniform(4)])

    def test_scale(self):
        factor = self.uniform(3, 1)
        check_gradient(lambda x: nx.scale(x, factor, 2.0), [self.uniform(3, 2)])

    def test_multiply(self):
        check_gradient(nx.multiply, [self.uniform(2, 3), self.uniform(2, 3)])

    def test_square(self):
        check_gradient(lambda x: nx.multiply(x, x), [self.uniform(5)])

    def test_matmul_batched(self):
        check_gradient(nx.matmul, [self.uniform(2, 3, 4), self.uniform(4, 2)])

    def test_concat(self):
        check_gradient(lambda a, b: nx.concat([a, b]), [self.uniform(2, 3), self.uniform(2, 1)])

    def test_gather_with_repeats(self):
        check_gradient(lambda t: nx.gather(t, [[0, 2], [2, 2]]), [self.uniform(4, 3)])

    def test_gather_from_vector(self):
        check_gradient(lambda t: nx.gather(t, [3, 0, 3]), [self.uniform(5)])

    def test_gather_scatters_repeated_rows(self):
        rec = nx.ComputationRecord()
        table = rec.parameter('t', np.arange(8.0).reshape(4, 2))
        grads = nx.forward_backward(rec, nx.reduce_sum(nx.gather(table, [[1, 1], [3, 1]])))
        np.testing.assert_array_equal(grads['t'], [[0, 0], [3, 3], [0, 0], [1, 1]])

    def test_take(self):
        check_gradient(lambda x: nx.take(x, 1, axis=1), [self.uniform(2, 3, 2)])

    def test_reshape_and_broadcast(self):
        check_gradient(lambda x: nx.broadcast_to(nx.reshape(x, (2, 1, 3)), (2, 4, 3)), [self.uniform(2, 3)])

    def test_sum_and_mean(self):
        check_gradient(lambda x: nx.reduce_sum(x, axis=1), [self.uniform(3, 4)])
        check_gradient(lambda x: nx.reduce_mean(x, axis=0), [self.uniform(3, 4)])
        check_gradient(lambda x: nx.reduce_mean(x), [self.uniform(3, 4)])

    def test_sparse_matmul(self):
        m = sparse.random(5, 5, density=0.4, random_state=3, format='csr')
        check_gradient(lambda x: nx.sparse_matmul(m, x), [self.uniform(5, 2)])

    def test_nonlinearities(self):
        check_gradient(nx.sigmoid, [self.uniform(6)])
        check_gradient(nx.tanh, [self.uniform(6, low=-3, high=3)])
        check_gradient(nx.relu, [self.uniform(6)])
        check_gradient(nx.log, [self.uniform(6, low=0.5, high=10.0)])
        check_gradient(lambda x: nx.clip(x, -5.0, 5.0), [self.uniform(6)])

    def test_masked_softmax(self):
        mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0]], dtype=bool)
        check_gradient(lambda x: nx.masked_softmax(x, mask), [self.uniform(2, 4, low=-3, high=3)])


class TestForwardBackward:

    def test_square_at_three(self):
        rec = nx.ComputationRecord()
        x = rec.parameter('x', 3.0)
        grads = nx.forward_backward(rec, nx.multiply(x, x))
        assert grads['x'] == 6.0

    def test_sum_of_two(self):
        rec = nx.ComputationRecord()
        x, y = rec.parameter('x', 1.5), rec.parameter('y', -2.0)
        grads = nx.forward_backward(rec, nx.add(x, y))
        assert grads['x'] == 1.0
        assert grads['y'] == 1.0

    def test_sigmoid_composition_matches_finite_difference(self):
        params = {'w': np.array(0.5)}

        def f(p, rec=None):
            if rec is None:
                rec = nx.ComputationRecord()
            w = rec.parameter('w', p['w'])
            return nx.sigmoid(nx.multiply(w, rec.constant(2.0)))

        rec = nx.ComputationRecord()
        analytic = nx.forward_backward(rec, f(params, rec))['w']
        numeric = nx.finite_difference_gradient(lambda p: f(p).value, params)['w']
        np.testing.assert_allclose(analytic, numeric, atol=1e-8)

    def test_unreachable_parameter_gets_zero(self):
        rec = nx.ComputationRecord()
        x = rec.parameter('x', np.ones(3))
        rec.parameter('unused', np.ones((2, 2)))
        grads = nx.forward_backward(rec, nx.reduce_sum(x))
        np.testing.assert_array_equal(grads['unused'], np.zeros((2, 2)))

    def test_non_scalar_loss(self):
        rec = nx.ComputationRecord()
        x = rec.parameter('x', np.ones(3))
        with pytest.raises(ContractError):
            nx.forward_backward(rec, x)

    def test_loss_from_another_record(self):
        rec, other = nx.ComputationRecord(), nx.ComputationRecord()
        rec.parameter('w', 2.0)
        stray = nx.multiply(other.parameter('w', 2.0), other.constant(3.0))
        with pytest.raises(ContractError):
            nx.forward_backward(rec, stray)

    def test_loss_index_outside_record(self):
        rec = nx.ComputationRecord()
        rec.parameter('w', 2.0)
        with pytest.raises(ContractError):
            nx.forward_backward(rec, 5)

    def test_non_finite_forward_names_operation(self):
        rec = nx.ComputationRecord()
        x = rec.parameter('x', np.array([0.0, 1.0]))
        with pytest.raises(NumericalError) as e:
            nx.log(x)
        assert e.value.operation == 'log'

    def test_duplicate_parameter(self):
        rec = nx.ComputationRecord()
        rec.parameter('x', 1.0)
        with pytest.raises(ContractError):
            rec.parameter('x', 2.0)

    def test_records_do_not_mix(self):
        a = nx.ComputationRecord().constant(1.0)
        b = nx.ComputationRecord().constant(2.0)
        with pytest.raises(ContractError):
            nx.add(a, b)

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(0)
        rec = nx.ComputationRecord()
        x = rec.parameter('x', rng.normal(size=(3, 4)))
        w = rec.parameter('w', rng.normal(size=(4, 2)))
        out = nx.reduce_mean(nx.tanh(nx.matmul(x, w)))
        first, second = rec.replay(), rec.replay()
        for a, b, c in zip(first, second, rec.values):
            np.testing.assert_array_equal(a, b)
            np.testing.assert_array_equal(a, c)
        assert out.index == len(rec) - 1


class TestFiniteDifference:

    def test_square(self):
        g = nx.finite_difference_gradient(lambda p: float(p['0'][0] ** 2), [np.array([3.0])], step=1e-5)
        np.testing.assert_allclose(g['0'], [6.0], atol=1e-8)

    def test_constant_function(self):
        g = nx.finite_difference_gradient(lambda p: 4.0, {'a': np.ones((2, 2))})
        np.testing.assert_array_equal(g['a'], np.zeros((2, 2)))

    def test_restores_parameters(self):
        a = np.arange(4.0)
        nx.finite_difference_gradient(lambda p: float(np.sum(p['a'] ** 2)), {'a': a})
        np.testing.assert_array_equal(a, np.arange(4.0))

    def test_non_finite_function(self):
        with pytest.raises(NumericalError):
            nx.finite_difference_gradient(lambda p: float('nan'), {'a': np.ones(1)})

    def test_bad_step(self):
        with pytest.raises(ContractError):
            nx.finite_difference_gradient(lambda p: 0.0, {'a': np.ones(1)}, step=0)


def test_masked_softmax_all_masked_row_is_zero():
    rec = nx.ComputationRecord()
    out = nx.masked_softmax(rec.constant([[1.0, 2.0], [3.0, 4.0]]), np.array([[0, 0], [1, 0]], dtype=bool))
    np.testing.assert_array_equal(out.value, [[0.0, 0.0], [1.0, 0.0]])
