import numpy as np
from hypothesis import given, settings, strategies as st

from srdetect.streams import RandomStreams, as_streams, next_normal, next_uniform


@given(seed=st.integers(0, 2**64 - 1), rep=st.integers(0, 10**9))
@settings(max_examples=50, deadline=None)
def test_python_and_compiled_uniforms_agree(seed, rep):
    sub = RandomStreams(seed).substream(rep)
    s = np.uint64(sub.state)
    for _ in range(5):
        s, u = next_uniform(s)
        s = np.uint64(s)  # the dispatcher hands back a plain int
        assert sub.uniform() == u
        assert 0.0 < u < 1.0


def test_normals_agree_and_look_normal():
    sub = RandomStreams(1).substream(0)
    s = np.uint64(sub.state)
    xs = []
    for _ in range(20_000):
        s, z = next_normal(s)
        s = np.uint64(s)
        assert sub.normal() == z
        xs.append(z)
    xs = np.array(xs)
    assert abs(xs.mean()) < 4 / np.sqrt(len(xs))
    assert abs(xs.var() - 1) < 0.05


def test_substreams_do_not_depend_on_replication_count():
    from srdetect.detectors import ThresholdRule, simulate_run_lengths
    from srdetect.models import ObservationModel

    m = ObservationModel("gaussian_mean_shift", 0.0, 1.0)
    r = ThresholdRule.sr(20.0)
    a, _ = simulate_run_lengths(r, m, RandomStreams(5), 100)
    b, _ = simulate_run_lengths(r, m, RandomStreams(5), 1000)
    assert np.array_equal(a, b[:100])


def test_spawn_paths_are_distinct():
    root = RandomStreams(7)
    roots = {int(root.spawn(k).root_u64) for k in ("a", "b", 1, 2)}
    roots.add(int(root.spawn("a", 1).root_u64))
    assert len(roots) == 5
    assert root.spawn("a").root_u64 == RandomStreams(7).spawn("a").root_u64
    assert RandomStreams(8).spawn("a").root_u64 != root.spawn("a").root_u64


def test_as_streams():
    assert as_streams(3).seed == 3
    s = RandomStreams(3)
    assert as_streams(s) is s
