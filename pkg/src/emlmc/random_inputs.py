"""Random diffusion coefficients, ensemble groups and the stability split.

Samples come from counter-based Philox streams keyed by
``(seed, level, replica)`` with the sample index in the counter, so any one
draw can be regenerated without replaying the others.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

SQRT3 = np.sqrt(3.0)
_CHUNK = 256


class SampleStream:
    """Deterministic parameter draws for one ``(seed, level, replica)``."""

    def __init__(self, seed, level=0, replica=0):
        self.seed, self.level, self.replica = int(seed), int(level), int(replica)
        ss = np.random.SeedSequence([self.seed, self.level, self.replica])
        self._key = ss.generate_state(2, dtype=np.uint64)

    def generator(self, j):
        counter = np.array([0, 0, 0, int(j)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    def uniforms(self, j, k):
        """``k`` i.i.d. Uniform[-sqrt3, sqrt3] values for sample ``j``."""
        u = self.generator(j).random(k)  # 53-bit uniforms on [0, 1)
        return SQRT3 * (2.0 * u - 1.0)


@dataclass(frozen=True)
class KLParams:
    a0: float = 1.0
    corr_length: float = 0.25
    sigma: float = 0.15
    n_terms: int = 3

    def eigenvalues(self):
        Lc = self.corr_length
        i = np.arange(1, self.n_terms + 1)
        lam0 = np.sqrt(np.pi) * Lc / 2.0
        lam = np.sqrt(np.pi) * Lc * np.exp(-((i * np.pi * Lc) ** 2) / 4.0)
        return np.concatenate([[lam0], lam])

    @property
    def n_params(self):
        return 2 * self.n_terms + 1

    def worst_case_deviation(self):
        """Bound on |a - a0| over all admissible parameter vectors."""
        s = np.sqrt(self.eigenvalues())
        return self.sigma * SQRT3 * (s[0] + 2.0 * s[1:].sum())


@dataclass(frozen=True, eq=False)
class CoefficientSample:
    """One realization ``a(omega_j, x)``.

    ``kind`` is ``"test1"`` (scalar ``omega``), ``"test2"`` (KL vector ``Y``)
    or ``"custom"`` (an arbitrary callable). ``index`` records the draw.
    """

    kind: str
    params: np.ndarray
    kl: KLParams = None
    func: object = None
    index: int = -1

    def __post_init__(self):
        if self.kind in ("test1", "test2") and not self.lower_bound() > 0:
            raise ValueError(
                f"sample {self.index}: coefficient not uniformly positive "
                f"(lower bound {self.lower_bound():.4g})")

    def lower_bound(self):
        if self.kind == "test1":
            w = self.params[0]
            return 8.0 + min(0.0, 1.0 + w) * np.sin(1.0)
        if self.kind == "test2":
            s = np.sqrt(self.kl.eigenvalues())
            Y = np.abs(self.params)
            n = self.kl.n_terms
            dev = self.kl.sigma * (s[0] * Y[0] + np.dot(s[1:], Y[1:n + 1] + Y[n + 1:]))
            return self.kl.a0 - dev
        return -np.inf

    @property
    def affine(self):
        return self.kind in ("test1", "test2")

    def affine_parts(self, x, y):
        """``(c0, Phi)`` such that ``a(x) = c0 + Phi @ params``."""
        return affine_parts(self.kind, self.kl, x, y)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if not self.affine:
            return np.asarray(self.func(x, y), dtype=float) * np.ones(x.shape)
        c0, Phi = self.affine_parts(x.ravel(), y.ravel())
        return (c0 + Phi @ self.params).reshape(x.shape)


def affine_parts(kind, kl, x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if kind == "test1":
        s = np.sin(x * y)
        return 8.0 + s, s[:, None]
    n = kl.n_terms
    sq = kl.sigma * np.sqrt(kl.eigenvalues())
    i = np.arange(1, n + 1)
    cols = [np.full_like(y, sq[0])[:, None],
            sq[1:] * np.cos(np.pi * np.outer(y, i)),
            sq[1:] * np.sin(np.pi * np.outer(y, i))]
    return np.full_like(y, kl.a0), np.hstack(cols)


def draw_test1(stream, j):
    return CoefficientSample("test1", stream.uniforms(j, 1), index=j)


def draw_test2(stream, j, kl=KLParams()):
    return CoefficientSample("test2", stream.uniforms(j, kl.n_params), kl=kl, index=j)


def fixed_test1(omega, index=0):
    return CoefficientSample("test1", np.array([float(omega)]), index=index)


def custom_sample(func, index=0):
    return CoefficientSample("custom", np.zeros(0), func=func, index=index)


def _same_affine(samples):
    s0 = samples[0]
    return all(s.affine and s.kind == s0.kind and s.kl == s0.kl for s in samples)


def evaluate_samples(samples, x, y):
    """Member values at points, shape (J, P)."""
    x = np.asarray(x, float).ravel()
    y = np.asarray(y, float).ravel()
    if samples and _same_affine(samples):
        c0, Phi = samples[0].affine_parts(x, y)
        params = np.array([s.params for s in samples])
        return c0[None, :] + params @ Phi.T
    return np.array([s(x, y) for s in samples])


def _chunks(samples, x, y):
    for start in range(0, len(samples), _CHUNK):
        yield evaluate_samples(samples[start:start + _CHUNK], x, y)


def probe_lattice(meshes=(), n=65, rule=None):
    """Uniform ``n x n`` lattice plus the quadrature nodes of ``meshes``."""
    from .fem import ASSEMBLY_RULE

    rule = ASSEMBLY_RULE if rule is None else rule
    t = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(t, t, indexing="xy")
    pts = [np.column_stack([X.ravel(), Y.ravel()])]
    for mesh in meshes:
        p = mesh.vertices[mesh.triangles]
        pts.append(np.einsum("qk,tkd->tqd", rule.points, p).reshape(-1, 2))
    return np.vstack(pts)


def estimate_theta_bounds(samples, probes):
    """``(theta_hat, theta_plus_hat)``: min of a_j and max |a_j - abar| on probes."""
    if isinstance(samples, EnsembleGroup):
        samples = samples.samples
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample group")
    x, y = probes[:, 0], probes[:, 1]
    total = np.zeros(len(probes))
    theta = np.inf
    for vals in _chunks(samples, x, y):
        total += vals.sum(axis=0)
        theta = min(theta, float(vals.min()))
    abar = total / len(samples)
    theta_plus = 0.0
    for vals in _chunks(samples, x, y):
        theta_plus = max(theta_plus, float(np.abs(vals - abar).max()))
    if len(samples) == 1:
        theta_plus = 0.0
    if not theta > 0:
        raise ValueError(
            f"coercivity violated: estimated lower bound {theta:.4g} <= 0")
    return theta, theta_plus


@dataclass(eq=False)
class EnsembleGroup:
    samples: list
    theta_hat: float
    theta_plus_hat: float
    probes: np.ndarray = field(repr=False, default=None)

    @property
    def size(self):
        return len(self.samples)

    @property
    def indices(self):
        return [s.index for s in self.samples]

    def values(self, x, y):
        return evaluate_samples(self.samples, x, y)

    def abar(self, x, y):
        """Pointwise ensemble mean of the member coefficients."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self.values(x, y).mean(axis=0).reshape(x.shape)

    @property
    def stable(self):
        return self.theta_hat > 3.0 * self.theta_plus_hat


def make_group(samples, probes):
    samples = list(samples)
    theta, theta_plus = estimate_theta_bounds(samples, probes)
    return EnsembleGroup(samples, theta, theta_plus, probes)


def check_stability(group):
    """Sufficient condition theta > 3 theta_plus for the ensemble scheme."""
    return bool(group.theta_hat > 3.0 * group.theta_plus_hat)


def split_for_stability(samples, probes):
    """Partition ``samples`` into groups that each satisfy the stability bound.

    A set that is already stable is returned unchanged as one group.
    Otherwise samples are sorted by spatial mean and cut greedily into
    contiguous runs.
    """
    samples = list(samples)
    if not samples:
        return []
    x, y = probes[:, 0], probes[:, 1]
    mins, means = [], []
    for vals in _chunks(samples, x, y):
        mins.append(vals.min(axis=1))
        means.append(vals.mean(axis=1))
    mins = np.concatenate(mins)
    means = np.concatenate(means)
    bad = np.flatnonzero(mins <= 0)
    if len(bad):
        j = bad[0]
        raise ValueError(
            f"sample {samples[j].index} (position {j}) is not coercive: "
            f"min a = {mins[j]:.4g} on the probe set")

    whole = make_group(samples, probes)
    if check_stability(whole):
        return [whole]

    order = np.argsort(means, kind="stable")
    chunks, current = [], []
    total = mx = mn = None
    theta = np.inf
    for pos, v in _ordered_values(samples, order, x, y):
        if not current:
            current, total, mx, mn, theta = [pos], v.copy(), v.copy(), v.copy(), mins[pos]
            continue
        t_total = total + v
        abar = t_total / (len(current) + 1)
        t_mx, t_mn = np.maximum(mx, v), np.minimum(mn, v)
        t_plus = max(float((t_mx - abar).max()), float((abar - t_mn).max()))
        t_theta = min(theta, mins[pos])
        if t_theta > 3.0 * t_plus:
            current.append(pos)
            total, mx, mn, theta = t_total, t_mx, t_mn, t_theta
        else:
            chunks.append(current)
            current, total, mx, mn, theta = [pos], v.copy(), v.copy(), v.copy(), mins[pos]
    chunks.append(current)

    groups = []
    for chunk in chunks:
        groups.extend(_verified_groups([samples[p] for p in chunk], probes))
    return groups


def _ordered_values(samples, order, x, y):
    for start in range(0, len(order), _CHUNK):
        block = order[start:start + _CHUNK]
        vals = evaluate_samples([samples[p] for p in block], x, y)
        yield from zip(block, vals)


def _verified_groups(members, probes):
    # recomputed bounds can differ from the running ones by rounding
    group = make_group(members, probes)
    if check_stability(group) or len(members) == 1:
        return [group]
    half = len(members) // 2
    return _verified_groups(members[:half], probes) + _verified_groups(members[half:], probes)


def write_samples_csv(path, rows):
    """Audit log; ``rows`` are ``(level, replica, sample)`` tuples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        width = max((len(s.params) for _, _, s in rows), default=0)
        w.writerow(["level", "replica", "index", "kind"]
                   + [f"p{k}" for k in range(width)])
        for level, replica, s in rows:
            w.writerow([level, replica, s.index, s.kind]
                       + [f"{v:.17g}" for v in s.params])
