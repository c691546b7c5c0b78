# Integration engine for semi-infinite integrals of the form
#   ∫₀^∞ envelope(x) · osc(ω x) dx,  osc ∈ {sin, cos},
# with envelopes that decay only algebraically. The half-line is cut at the zeros of the
# oscillator, every cell is integrated with an adaptive Gauss–Kronrod (7, 15) pair and the
# sequence of partial sums is accelerated with Wynn's epsilon algorithm.

import math
from dataclasses import dataclass, asdict, replace
from enum import Enum
import numpy as np
from .errors import DomainError, QuadratureError

# Kronrod abscissae on [-1, 1] (positive half, descending; the last one is the centre).
# Odd positions are the 7-point Gauss abscissae.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:7], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:7], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    GAUSS_WEIGHTS[_i] = GAUSS_WEIGHTS[14 - _i] = _w
GAUSS_WEIGHTS[7] = _WG[3]

EPS = np.finfo(float).eps
ROUNDOFF = 50 * EPS
MIN_CELLS = 6
CELL_BLOCK = 16
EPSILON_DEPTH = 24
MAX_DOUBLINGS = 1000


class Wave(Enum):
    SINE = 'sine'
    COSINE = 'cosine'


@dataclass(frozen=True)
class OscillatorKind:
    kind: Wave
    frequency: float

    def __post_init__(self):
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise DomainError(f'oscillator frequency must be positive, got {self.frequency!r}')

    def __call__(self, x):
        if self.kind is Wave.SINE:
            return np.sin(self.frequency * x)
        return np.cos(self.frequency * x)

    def zero(self, k):
        """Left edge of the k-th cell: consecutive zeros of the oscillator, starting at 0."""
        if k == 0:
            return 0.0
        if self.kind is Wave.SINE:
            return k * math.pi / self.frequency
        return (k - 0.5) * math.pi / self.frequency


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_cells: int = 4000
    max_panel_depth: int = 60

    def __post_init__(self):
        for name in ('rel_tol', 'abs_tol'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise DomainError(f'{name} must lie in (0, 1), got {value!r}')
        if int(self.max_cells) != self.max_cells or self.max_cells < 8:
            raise DomainError(f'max_cells must be an integer >= 8, got {self.max_cells!r}')
        if int(self.max_panel_depth) != self.max_panel_depth or self.max_panel_depth < 1:
            raise DomainError(f'max_panel_depth must be a positive integer, got {self.max_panel_depth!r}')

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f'unknown quadrature keys: {", ".join(sorted(unknown))}')
        return cls(**data)


INNER_DEFAULT = QuadratureConfig(rel_tol=1e-10, abs_tol=1e-14)
OUTER_DEFAULT = QuadratureConfig(rel_tol=1e-8, abs_tol=1e-15)


class EpsilonTable:
    """Wynn's epsilon algorithm, fed one partial sum at a time.

    Only the newest ascending diagonal of the table is kept. Even columns hold the
    accelerated estimates; the deepest even entry of the diagonal is reported.
    """

    def __init__(self, depth=EPSILON_DEPTH):
        self.depth = depth
        self.diagonal = []
        self.estimates = []

    def append(self, partial_sum):
        new = [partial_sum]
        old = self.diagonal
        for k in range(min(len(old), self.depth)):
            diff = new[k] - old[k]
            if diff == 0.0:
                break
            value = (old[k - 1] if k > 0 else 0.0) + 1.0 / diff
            if not math.isfinite(value):
                break
            new.append(value)
        self.diagonal = new
        top = len(new) - 1
        estimate = new[top - (top % 2)]
        self.estimates.append(estimate)
        return estimate

    def change(self):
        if len(self.estimates) < 3:
            return math.inf
        last = self.estimates[-1]
        return max(abs(last - self.estimates[-2]), abs(last - self.estimates[-3]))


class _Sum:
    # Neumaier compensated accumulator; summation order is the call order.
    def __init__(self):
        self.total = 0.0
        self.compensation = 0.0

    def add(self, value):
        t = self.total + value
        if abs(self.total) >= abs(value):
            self.compensation += (self.total - t) + value
        else:
            self.compensation += (value - t) + self.total
        self.total = t

    @property
    def value(self):
        return self.total + self.compensation


def _integrand(envelope, oscillator):
    if oscillator is None:
        return envelope
    return lambda x: envelope(x) * oscillator(x)


def gauss_kronrod(func, a, b):
    """Kronrod-15 estimates on the panels [a[i], b[i]].

    Returns (estimate, |K15 - G7|, K15 of |func|) as arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = centre[:, None] + half[:, None] * NODES[None, :]
    fx = np.asarray(func(x.ravel()), dtype=float).reshape(x.shape)
    kronrod = half * (fx @ KRONROD_WEIGHTS)
    gauss = half * (fx @ GAUSS_WEIGHTS)
    resabs = np.abs(half) * (np.abs(fx) @ KRONROD_WEIGHTS)
    return kronrod, np.abs(kronrod - gauss), resabs


def _adaptive(func, a, b, cfg):
    # Level-synchronous bisection: every unconverged panel is halved at once, and each
    # panel is held to its share of the tolerance in proportion to its width.
    width = b - a
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    values, errors = [], []
    for depth in range(cfg.max_panel_depth + 1):
        estimate, error, resabs = gauss_kronrod(func, lo, hi)
        total = math.fsum(values) + math.fsum(estimate)
        tol = max(cfg.abs_tol, cfg.rel_tol * abs(total))
        budget = tol * (hi - lo) / width
        narrow = (hi - lo) <= 4 * EPS * np.maximum(np.abs(lo), np.abs(hi))
        done = (error <= budget) | (error <= ROUNDOFF * resabs) | narrow
        values.extend(estimate[done])
        errors.extend(error[done])
        if done.all():
            return math.fsum(values), math.fsum(errors)
        lo, hi = lo[~done], hi[~done]
        if depth == cfg.max_panel_depth:
            best = math.fsum(values) + math.fsum(estimate[~done])
            bound = math.fsum(errors) + math.fsum(error[~done])
            raise QuadratureError(f'panel depth {cfg.max_panel_depth} exhausted on [{a!r}, {b!r}]',
                                  estimate=best, error=bound)
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])


def integrate_cell(envelope, oscillator, a, b, cfg, full_output=False):
    """∫ₐᵇ envelope(x)·osc(x) dx with an adaptive Gauss–Kronrod (7, 15) pair.

    `oscillator` may be None for a plain integral. The error bound is the sum of
    |K15 - G7| over accepted panels.
    """
    a, b = float(a), float(b)
    if not (0 <= a < b and math.isfinite(b)):
        raise DomainError(f'cell needs 0 <= a < b, got [{a!r}, {b!r}]')
    value, error = _adaptive(_integrand(envelope, oscillator), a, b, cfg)
    if full_output:
        return value, error
    return value


def _first_cell_pieces(end, scale):
    # Geometric split [0, s], [s, 2s], [2s, 4s], ... up to the end of the first cell.
    edges = [0.0]
    if scale is not None and 0 < scale < end:
        edge = scale
        while edge < end:
            edges.append(edge)
            edge *= 2
    edges.append(end)
    return list(zip(edges[:-1], edges[1:]))


def _cells_converged(table, cells, zeros, cfg):
    if cells < MIN_CELLS:
        return False
    if zeros >= 3:
        return True
    estimate = table.estimates[-1]
    return table.change() <= max(cfg.abs_tol, cfg.rel_tol * abs(estimate))


def integrate_semi_infinite_oscillatory(envelope, oscillator, cfg, scale=None, full_output=False):
    """∫₀^∞ envelope(x)·osc(ωx) dx as an accelerated sum of half-period cells.

    Cell edges are the consecutive zeros of the oscillator. The envelope must decay
    to zero eventually (power law or faster); the cell integrals then alternate in
    sign and their partial sums are extrapolated with the epsilon algorithm.

    `scale` is the width on which the envelope varies near the origin; when it is
    smaller than the first cell, that cell is split geometrically from `scale` on.
    With `full_output` the result is (value, error bound, cells used).
    """
    if oscillator is None:
        raise DomainError('an oscillator is required; use integrate_semi_infinite for plain integrals')
    func = _integrand(envelope, oscillator)
    table = EpsilonTable()
    partial = _Sum()
    cell_error = _Sum()
    zeros = 0

    first = _Sum()
    for a, b in _first_cell_pieces(oscillator.zero(1), scale):
        value, error = _adaptive(func, a, b, cfg)
        first.add(value)
        cell_error.add(error)
    partial.add(first.value)
    table.append(partial.value)
    cells = 1

    while cells < cfg.max_cells:
        count = min(CELL_BLOCK, cfg.max_cells - cells)
        ks = np.arange(cells, cells + count)
        lo = np.array([oscillator.zero(k) for k in ks])
        hi = np.array([oscillator.zero(k + 1) for k in ks])
        estimate, error, resabs = gauss_kronrod(func, lo, hi)
        for i in range(count):
            value, bound = estimate[i], error[i]
            tol = max(cfg.abs_tol, cfg.rel_tol * abs(value))
            if bound > tol and bound > ROUNDOFF * resabs[i]:
                value, bound = _adaptive(func, lo[i], hi[i], cfg)
            zeros = zeros + 1 if value == 0.0 else 0
            partial.add(value)
            cell_error.add(bound)
            table.append(partial.value)
            cells += 1
            if _cells_converged(table, cells, zeros, cfg):
                result = table.estimates[-1] if zeros < 3 else partial.value
                if full_output:
                    tail = 0.0 if zeros >= 3 else table.change()
                    return result, tail + cell_error.value, cells
                return result

    raise QuadratureError(f'no convergence after {cells} cells', estimate=table.estimates[-1],
                          error=table.change(), cells=cells, partial_sums=table.estimates[-3:])


def integrate_semi_infinite(envelope, cfg, scale=1.0, full_output=False):
    """∫₀^∞ envelope(x) dx over doubling cells [0, s], [s, 2s], [2s, 4s], ...

    Algebraic tails turn into geometric sequences of partial sums, which the
    epsilon algorithm extrapolates.
    """
    if not (math.isfinite(scale) and scale > 0):
        raise DomainError(f'scale must be positive, got {scale!r}')
    table = EpsilonTable()
    partial = _Sum()
    cell_error = _Sum()
    zeros = 0
    a, b = 0.0, scale
    for cells in range(1, min(cfg.max_cells, MAX_DOUBLINGS) + 1):
        value, error = _adaptive(envelope, a, b, cfg)
        zeros = zeros + 1 if value == 0.0 else 0
        partial.add(value)
        cell_error.add(error)
        table.append(partial.value)
        if _cells_converged(table, cells, zeros, cfg):
            result = table.estimates[-1] if zeros < 3 else partial.value
            if full_output:
                tail = 0.0 if zeros >= 3 else table.change()
                return result, tail + cell_error.value, cells
            return result
        a, b = b, 2 * b
    raise QuadratureError(f'no convergence after {cells} doubling cells', estimate=table.estimates[-1],
                          error=table.change(), cells=cells, partial_sums=table.estimates[-3:])


def oscillatory_cells(envelope, oscillator, cfg, count):
    func = _integrand(envelope, oscillator)
    return np.array([_adaptive(func, oscillator.zero(k), oscillator.zero(k + 1), cfg)[0]
                     for k in range(count)])
