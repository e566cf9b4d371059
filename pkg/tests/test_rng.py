import numpy as np

from causalews.rng import SeededRng


def test_same_seed_same_sequence():
    a = SeededRng(42)
    b = SeededRng(42)
    np.testing.assert_array_equal(a.normal((10,)), b.normal((10,)))
    np.testing.assert_array_equal(a.integers(0, 100, (5,)), b.integers(0, 100, (5,)))


def test_child_streams_independent_of_parent_draws():
    a = SeededRng(7)
    _ = a.normal((100,))  # consume from the parent
    b = SeededRng(7)
    np.testing.assert_array_equal(
        a.child("gumbel").uniform((8,)), b.child("gumbel").uniform((8,))
    )


def test_distinct_children_differ():
    r = SeededRng(1)
    x = r.child("a").normal((50,))
    y = r.child("b").normal((50,))
    assert not np.allclose(x, y)


def test_gumbel_moments():
    r = SeededRng(11)
    g = r.gumbel((200_000,))
    # Gumbel(0,1): mean = Euler-Mascheroni, var = pi^2/6
    assert abs(g.mean() - 0.5772) < 0.01
    assert abs(g.var() - np.pi**2 / 6) < 0.03


def test_bernoulli_rate():
    r = SeededRng(13)
    draws = r.bernoulli(np.full(100_000, 0.3))
    assert abs(draws.mean() - 0.3) < 0.01
