import numpy as np
import pytest

from fedoptlab.blockvec import BlockVector, block_average, broadcast_add, reflect_consensus


def test_average_mean_of_blocks():
    z = BlockVector.from_blocks([(1.0, 2.0), (3.0, 4.0)])
    assert np.array_equal(block_average(z), [2.0, 3.0])


def test_average_single_client_identity():
    z = BlockVector.from_blocks([(5.0, -1.0)])
    assert np.array_equal(block_average(z), [5.0, -1.0])


def test_average_scalar_blocks():
    z = BlockVector.from_blocks([[0.0], [0.0], [9.0]])
    assert np.array_equal(block_average(z), [3.0])


def test_reflect_swaps_two_scalar_blocks():
    z = BlockVector.from_blocks([[0.0], [2.0]])
    assert np.array_equal(reflect_consensus(z).data, [[2.0], [0.0]])


def test_reflect_fixes_consensus_points():
    z = BlockVector.filled(4, np.array([1.5, -2.0, 0.25]))
    assert np.array_equal(reflect_consensus(z).data, z.data)


def test_reflect_three_blocks_hand_check():
    z = BlockVector.from_blocks([[1.0], [2.0], [3.0]])
    out = reflect_consensus(z)
    # hand-check oracle: 2 zbar - z_j computed independently
    zbar = np.mean(z.data, axis=0)
    expected = 2.0 * zbar - z.data
    assert np.allclose(out.data, expected, rtol=0, atol=1e-15)
    assert np.array_equal(out.data, [[3.0], [2.0], [1.0]])


def test_broadcast_add_examples():
    z = BlockVector.from_blocks([[0.0], [2.0]])
    assert np.array_equal(broadcast_add([1.0], z).data, [[1.0], [3.0]])
    assert np.array_equal(broadcast_add([0.0], z).data, z.data)
    z2 = BlockVector.from_blocks([(1.0, 1.0)])
    assert np.array_equal(broadcast_add((-1.0, 1.0), z2).data, [[0.0, 2.0]])


def test_broadcast_add_dimension_mismatch():
    z = BlockVector.from_blocks([(1.0, 2.0)])
    with pytest.raises(ValueError, match="dimension mismatch"):
        broadcast_add([1.0], z)


def test_construction_rejects_ragged_blocks():
    with pytest.raises(ValueError):
        BlockVector.from_blocks([[1.0, 2.0], [3.0]])
    with pytest.raises(ValueError):
        BlockVector(np.zeros((0, 3)))


def test_blocks_are_immutable():
    z = BlockVector.from_blocks([[1.0], [2.0]])
    with pytest.raises(ValueError):
        z.data[0, 0] = 7.0
    with pytest.raises(AttributeError):
        z.data = np.zeros((2, 1))


def test_reflection_preserves_average():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m, d = int(rng.integers(1, 7)), int(rng.integers(1, 9))
        z = BlockVector(rng.normal(scale=5.0, size=(m, d)))
        before = block_average(z)
        after = block_average(reflect_consensus(z))
        assert np.allclose(after, before, rtol=0, atol=1e-12 * (1 + np.abs(before).max()))


def test_reflection_is_an_involution():
    rng = np.random.default_rng(1)
    for _ in range(50):
        z = BlockVector(rng.normal(size=(4, 6)))
        twice = reflect_consensus(reflect_consensus(z))
        assert np.allclose(twice.data, z.data, rtol=0, atol=1e-12)


def test_reflection_is_nonexpansive():
    rng = np.random.default_rng(2)
    for _ in range(200):
        m, d = int(rng.integers(1, 6)), int(rng.integers(1, 8))
        z = BlockVector(rng.normal(size=(m, d)))
        w = BlockVector(rng.normal(size=(m, d)))
        lhs = (reflect_consensus(z) - reflect_consensus(w)).norm()
        rhs = (z - w).norm()
        assert lhs <= rhs * (1 + 1e-12)
