"""Problem data for the two benchmark cases.

Every data callback is batched over ensemble members: it receives point
coordinates ``x, y`` of shape (P,) and a list of samples, and returns an
array of shape (P, J).
"""
from dataclasses import dataclass, field

import numpy as np

from .random_inputs import KLParams, draw_test1, draw_test2, fixed_test1

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi


def _omegas(samples):
    return np.array([s.params[0] for s in samples])


@dataclass
class Test1Problem:
    """Manufactured solution ``u = (1 + w)(sin 2pix sin 2piy + sin 4pit)``.

    With ``a = 8 + (1 + w) sin(xy)`` and ``w ~ U[-sqrt3, sqrt3]``. Setting
    ``omega`` fixes every draw to that value (deterministic limit).
    """

    __test__ = False  # keep pytest from collecting the class

    T: float = 1.0
    omega: float = None
    name: str = "test1"
    zero_forcing = False
    homogeneous_bc = False

    def draw(self, stream, j):
        if self.omega is not None:
            return fixed_test1(self.omega, index=j)
        return draw_test1(stream, j)

    def exact(self, samples, x, y, t):
        w = 1.0 + _omegas(samples)
        base = np.sin(TWO_PI * x) * np.sin(TWO_PI * y) + np.sin(FOUR_PI * t)
        return np.outer(base, w)

    def forcing(self, samples, x, y, t):
        w = 1.0 + _omegas(samples)
        S = np.sin(TWO_PI * x) * np.sin(TWO_PI * y)
        a = 8.0 + np.outer(np.sin(x * y), w)
        # grad(a) . grad(S) per unit (1 + w)
        adv = np.cos(x * y) * TWO_PI * (y * np.cos(TWO_PI * x) * np.sin(TWO_PI * y)
                                        + x * np.sin(TWO_PI * x) * np.cos(TWO_PI * y))
        val = (FOUR_PI * np.cos(FOUR_PI * t)
               + 2.0 * TWO_PI ** 2 * a * S[:, None]
               - np.outer(adv, w))
        return val * w[None, :]

    def boundary(self, samples, x, y, t):
        return self.exact(samples, x, y, t)

    def initial(self, samples, x, y):
        return self.exact(samples, x, y, 0.0)

    @staticmethod
    def exact_mean(x, y, t):
        return np.sin(TWO_PI * x) * np.sin(TWO_PI * y) + np.sin(FOUR_PI * t)

    @staticmethod
    def exact_mean_grad(x, y, t):
        return (TWO_PI * np.cos(TWO_PI * x) * np.sin(TWO_PI * y),
                TWO_PI * np.sin(TWO_PI * x) * np.cos(TWO_PI * y))


@dataclass
class Test2Problem:
    """Zero forcing and initial data; ``u = y(1 - y)`` on the left edge only."""

    __test__ = False

    T: float = 0.5
    kl: KLParams = field(default_factory=KLParams)
    name: str = "test2"
    zero_forcing = True
    homogeneous_bc = False
    exact = None

    def draw(self, stream, j):
        return draw_test2(stream, j, self.kl)

    def forcing(self, samples, x, y, t):
        return np.zeros((len(x), len(samples)))

    def boundary(self, samples, x, y, t):
        g = np.where(np.abs(x) < 1e-14, y * (1.0 - y), 0.0)
        return np.repeat(g[:, None], len(samples), axis=1)

    def initial(self, samples, x, y):
        return np.zeros((len(x), len(samples)))


@dataclass
class FunctionProblem:
    """Problem assembled from plain callables; used for checks and custom runs.

    ``coefficient(stream, j)`` returns a sample; ``f``, ``g``, ``u0`` and the
    optional ``u`` take ``(x, y, t)`` (``u0``: ``(x, y)``) and ignore the
    sample.
    """

    coefficient: object
    f: object = None
    g: object = None
    u0: object = None
    u: object = None
    T: float = 1.0
    name: str = "custom"

    @property
    def zero_forcing(self):
        return self.f is None

    @property
    def homogeneous_bc(self):
        return self.g is None

    def draw(self, stream, j):
        return self.coefficient(stream, j)

    @staticmethod
    def _tile(vals, x, samples):
        vals = np.asarray(vals, dtype=float) * np.ones(len(x))
        return np.repeat(vals[:, None], len(samples), axis=1)

    def forcing(self, samples, x, y, t):
        if self.f is None:
            return np.zeros((len(x), len(samples)))
        return self._tile(self.f(x, y, t), x, samples)

    def boundary(self, samples, x, y, t):
        if self.g is None:
            return np.zeros((len(x), len(samples)))
        return self._tile(self.g(x, y, t), x, samples)

    def initial(self, samples, x, y):
        if self.u0 is None:
            return np.zeros((len(x), len(samples)))
        return self._tile(self.u0(x, y), x, samples)

    @property
    def exact(self):
        if self.u is None:
            return None
        return lambda samples, x, y, t: self._tile(self.u(x, y, t), x, samples)
