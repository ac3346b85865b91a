import numpy as np
import pytest
from hypothesis import given, strategies as st

from emlmc import random_inputs as ri
from emlmc.mesh import build_single

SQRT3 = np.sqrt(3.0)
PROBES = ri.probe_lattice([build_single(np.sqrt(2) / 4)])


def test_test1_closed_form():
    a = ri.fixed_test1(0.0)
    x, y = np.array([0.2, 0.9]), np.array([0.5, 0.3])
    assert np.array_equal(a(x, y), 8 + np.sin(x * y))
    assert np.isclose(ri.fixed_test1(SQRT3)(0.5, 0.5), 8 + (1 + SQRT3) * np.sin(0.25),
                      rtol=1e-15)


def test_test1_moments():
    s = ri.SampleStream(11, 0, 0)
    w = np.array([ri.draw_test1(s, j).params[0] for j in range(100_000)])
    assert abs(w.mean()) < 0.02
    assert abs(w.var() - 1) < 0.03
    assert w.min() >= -SQRT3 and w.max() <= SQRT3


def test_streams_deterministic_and_distinct():
    a = ri.SampleStream(5, 1, 2).uniforms(7, 4)
    b = ri.SampleStream(5, 1, 2).uniforms(7, 4)
    assert np.array_equal(a, b)
    for other in (ri.SampleStream(5, 1, 3), ri.SampleStream(5, 2, 2), ri.SampleStream(6, 1, 2)):
        assert not np.array_equal(a, other.uniforms(7, 4))
    assert not np.array_equal(a, ri.SampleStream(5, 1, 2).uniforms(8, 4))


def test_kl_eigenvalues():
    lam = ri.KLParams().eigenvalues()
    assert abs(lam[0] - 0.221557) < 1e-6
    assert abs(lam[1] - 0.379788) < 1e-6
    assert abs(lam[0] - np.sqrt(np.pi) * 0.25 / 2) < 1e-15
    zero = ri.CoefficientSample("test2", np.zeros(7), kl=ri.KLParams())
    assert np.array_equal(zero(np.linspace(0, 1, 5), np.linspace(0, 1, 5)), np.ones(5))


def test_kl_worst_case_bound():
    kl = ri.KLParams()
    assert abs(kl.worst_case_deviation() - 0.8694) < 2e-4
    s = ri.SampleStream(3)
    x = np.random.default_rng(0).random((2, 400))
    vals = ri.evaluate_samples([ri.draw_test2(s, j, kl) for j in range(10_000)], *x)
    assert vals.min() > 1 - 0.8695 > 0.13


def test_theta_bounds_examples():
    g = ri.make_group([ri.fixed_test1(w) for w in (-SQRT3, 0.0, SQRT3)], PROBES)
    assert abs(g.theta_hat - (8 + (1 - SQRT3) * np.sin(1))) < 1e-12
    g2 = ri.make_group([ri.fixed_test1(-SQRT3), ri.fixed_test1(SQRT3)], PROBES)
    assert abs(g2.theta_plus_hat - SQRT3 * np.sin(1)) < 1e-12
    assert ri.check_stability(g2)
    single = ri.make_group([ri.fixed_test1(1.0)], PROBES)
    assert single.theta_plus_hat == 0 and ri.check_stability(single)


def test_constant_synthetic_group():
    members = [ri.custom_sample(lambda x, y: 1.0 + 0 * x), ri.custom_sample(lambda x, y: 10.0 + 0 * x)]
    g = ri.make_group(members, PROBES)
    assert np.allclose(g.abar(0.3, 0.4), 5.5)
    assert (g.theta_hat, g.theta_plus_hat) == (1.0, 4.5)
    assert not ri.check_stability(g)


def test_noncoercive_rejected():
    bad = ri.custom_sample(lambda x, y: x - 0.5, index=42)
    with pytest.raises(ValueError, match="42"):
        ri.split_for_stability([ri.fixed_test1(0.0), bad], PROBES)
    with pytest.raises(ValueError):
        ri.estimate_theta_bounds([bad], PROBES)


def test_split_test2_draws():
    s = ri.SampleStream(2024, 0, 0)
    draws = [ri.draw_test2(s, j) for j in range(64)]
    groups = ri.split_for_stability(draws, PROBES)
    assert len(groups) > 1
    for g in groups:
        assert ri.check_stability(ri.make_group(g.samples, PROBES))
    ids = sorted(id(x) for g in groups for x in g.samples)
    assert ids == sorted(id(x) for x in draws)


def test_stable_set_kept_in_order():
    s = ri.SampleStream(1)
    draws = [ri.draw_test1(s, j) for j in range(50)]
    (g,) = ri.split_for_stability(draws, PROBES)
    assert g.samples == draws


@given(st.lists(st.floats(0.2, 20.0), min_size=1, max_size=25))
def test_split_partitions_constants(levels):
    members = [ri.custom_sample(lambda x, y, c=c: c + 0 * x, index=k)
               for k, c in enumerate(levels)]
    groups = ri.split_for_stability(members, PROBES[:50])
    assert sorted(m.index for g in groups for m in g.samples) == list(range(len(levels)))
    assert all(ri.check_stability(g) for g in groups)


@given(st.integers(0, 2**31), st.integers(1, 40))
def test_deviations_sum_to_zero(seed, J):
    s = ri.SampleStream(seed)
    g = ri.make_group([ri.draw_test2(s, j) for j in range(J)], PROBES[:100])
    x = np.random.default_rng(seed).random((2, 30))
    vals = g.values(*x)
    assert np.abs((vals - g.abar(*x)).sum(axis=0)).max() < 1e-12


def test_samples_csv(tmp_path):
    s = ri.SampleStream(1)
    rows = [(0, 0, ri.draw_test2(s, j)) for j in range(3)]
    ri.write_samples_csv(tmp_path / "s.csv", rows)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("level,replica,index,kind,p0")
    assert len(lines) == 4
    assert float(lines[1].split(",")[4]) == rows[0][2].params[0]
