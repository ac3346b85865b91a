"""Symmetric quadrature rules on the reference triangle.

Points are stored as barycentric triples and weights are normalized to sum
to one, so that ``area * sum(w * f(x_q))`` integrates over a physical triangle.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,), sum to 1
    degree: int

    @property
    def n_points(self):
        return len(self.weights)


def _orbit(weight, a, b=None, c=None):
    """Expand one symmetry orbit of barycentric points."""
    if b is None:
        return [(weight, (a, a, a))]
    if c is None:
        return [(weight, p) for p in ((a, b, b), (b, a, b), (b, b, a))]
    perms = ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a))
    return [(weight, p) for p in perms]


def _rule(orbits, degree):
    items = [item for orbit in orbits for item in orbit]
    weights = np.array([w for w, _ in items])
    points = np.array([p for _, p in items])
    return QuadratureRule(points=points, weights=weights, degree=degree)


def _degree5():
    s = np.sqrt(15.0)
    a1, b1 = (6.0 - s) / 21.0, (9.0 + 2.0 * s) / 21.0
    a2, b2 = (6.0 + s) / 21.0, (9.0 - 2.0 * s) / 21.0
    return _rule(
        [
            _orbit(9.0 / 40.0, 1.0 / 3.0),
            _orbit((155.0 - s) / 1200.0, b1, a1),
            _orbit((155.0 + s) / 1200.0, b2, a2),
        ],
        degree=5,
    )


def _degree8():
    # Dunavant (1985), 16 points.
    rule = _rule(
        [
            _orbit(0.144315607677787, 1.0 / 3.0),
            _orbit(0.095091634267285, 0.081414823414554, 0.459292588292723),
            _orbit(0.103217370534718, 0.658861384496480, 0.170569307751760),
            _orbit(0.032458497623198, 0.898905543365938, 0.050547228317031),
            _orbit(0.027230314174435, 0.008394777409958, 0.263112829634638,
                   0.728492392955404),
        ],
        degree=8,
    )
    return _polish(rule)


def _monomial_moments(degree):
    """Exact normalized moments of x**p * y**q over the reference triangle."""
    exps = [(p, q) for p in range(degree + 1) for q in range(degree + 1 - p)]
    exact = np.array([2.0 * factorial(p) * factorial(q) / factorial(p + q + 2)
                      for p, q in exps])
    return exps, exact


def _polish(rule, sweeps=3):
    """Re-solve the weights in least squares so moments hold to round-off.

    The tabulated values carry 15 digits; a linear least-squares fit on the
    weights alone removes the residual error without moving the points.
    """
    exps, exact = _monomial_moments(rule.degree)
    x, y = rule.points[:, 1], rule.points[:, 2]
    V = np.array([x ** p * y ** q for p, q in exps])
    w = rule.weights.copy()
    for _ in range(sweeps):
        dw, *_ = np.linalg.lstsq(V, exact - V @ w, rcond=None)
        w = w + dw
    return QuadratureRule(points=rule.points, weights=w, degree=rule.degree)


def monomial_error(rule, degree=None):
    """Max abs error of ``rule`` on monomials up to ``degree`` (default: its own)."""
    degree = rule.degree if degree is None else degree
    exps, exact = _monomial_moments(degree)
    x, y = rule.points[:, 1], rule.points[:, 2]
    approx = np.array([np.dot(rule.weights, x ** p * y ** q) for p, q in exps])
    return float(np.max(np.abs(approx - exact)))


def gauss_collapsed(order):
    """Tensor Gauss-Legendre rule mapped onto the triangle (Duffy collapse).

    Exact for polynomials of total degree ``2*order - 2``. Used as an
    independent oracle for the symmetric rules.
    """
    g, gw = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (g + 1.0)
    sw = 0.5 * gw
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(sw, sw)
    x = S
    y = T * (1.0 - S)
    w = (W * (1.0 - S)).ravel() * 2.0
    pts = np.column_stack([1.0 - x.ravel() - y.ravel(), x.ravel(), y.ravel()])
    return QuadratureRule(points=pts, weights=w, degree=2 * order - 2)


DEGREE5 = _degree5()
DEGREE8 = _degree8()
