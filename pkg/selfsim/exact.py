import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import numpy as np
from .errors import DomainError, EvaluationError, SelfSimError
from .automodel import front_position
from .kernel import DirectExponent, ExponentTable, KernelParams, TableConfig, step_pdf
from .meshes import LogMesh
from .quadrature import (INNER_DEFAULT, OUTER_DEFAULT, OscillatorKind, Wave, integrate_cell, integrate_semi_infinite,
                         integrate_semi_infinite_oscillatory)
from .tables import format_float, read_table, write_table

logger = logging.getLogger(__name__)

NEUMANN_MAX_T = 0.5
MONOTONE_SLACK = 1e-6


def exponent_scale(exponent, t):
    """Width in p over which exp(-t G(p)) falls off: (t I)^(-1/γ), capped at 1."""
    gamma = exponent.params.gamma
    return min(1.0, (t * exponent.levy) ** (-1.0 / gamma))


def green_regular(params, x, t, cfg=OUTER_DEFAULT, exponent=None):
    """Regular part of the Green's function at (x, t).

    (1/π) ∫₀^∞ cos(p|x|) (exp(-t G(p)) - exp(-t)) dp. The never-scattered part
    exp(-t) δ(x) is removed from the integrand, which then decays to zero.
    The integration variable is rescaled by the width of the damping factor.
    """
    t = float(t)
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f'time must be positive, got {t!r}')
    if exponent is None:
        exponent = DirectExponent(params)
    rho = abs(float(x))
    scale = exponent_scale(exponent, t)
    envelope = lambda q: exponent.damping(t, scale * q)
    try:
        if rho > 0:
            oscillator = OscillatorKind(Wave.COSINE, rho * scale)
            value = integrate_semi_infinite_oscillatory(envelope, oscillator, cfg, scale=1.0)
        else:
            value = integrate_semi_infinite(envelope, cfg, scale=1.0)
    except SelfSimError as e:
        raise EvaluationError('regular part did not converge', dict(x=x, t=t, gamma=params.gamma), cause=e)
    return scale * value / math.pi


def delta_weight(t):
    return math.exp(-t)


def _self_convolution(params, x, cfg):
    # (W⋆W)(x) = 2∫₀^∞ W(v) W(x+v) dv + ∫₀^x W(u) W(x-u) du
    tail = integrate_semi_infinite(lambda v: step_pdf(params, v) * step_pdf(params, x + v), cfg)
    if x == 0:
        return 2 * tail
    inner = integrate_cell(lambda u: step_pdf(params, u) * step_pdf(params, np.abs(x - u)), None, 0.0, x, cfg)
    return 2 * tail + inner


def _triple_convolution(params, x, cfg):
    # (W⋆W⋆W)(x) = ∫₀^∞ [W(v) W₂(x+v) + W(x+v) W₂(v)] dv + ∫₀^x W(u) W₂(x-u) du
    w2 = np.vectorize(lambda y: _self_convolution(params, float(y), cfg), otypes=[float])
    outer = lambda v: step_pdf(params, v) * w2(x + v) + step_pdf(params, x + v) * w2(v)
    value = integrate_semi_infinite(outer, cfg)
    if x > 0:
        value += integrate_cell(lambda u: step_pdf(params, u) * w2(np.abs(x - u)), None, 0.0, x, cfg)
    return value


def neumann_reference(params, x, t, orders, cfg=INNER_DEFAULT):
    """Small-t multiple-scattering series for the regular part.

    exp(-t) Σ tⁿ/n! W^(⋆n)(x) for n = 1 .. orders, with the convolution powers of
    the step PDF integrated directly in x.
    """
    if orders not in (1, 2, 3):
        raise DomainError(f'orders must be 1, 2 or 3, got {orders!r}')
    t = float(t)
    if not 0 < t <= NEUMANN_MAX_T:
        raise DomainError(f'the scattering series is only used for 0 < t <= {NEUMANN_MAX_T}, got {t!r}')
    x = abs(float(x))
    terms = [step_pdf(params, x)]
    if orders >= 2:
        terms.append(_self_convolution(params, x, cfg))
    if orders >= 3:
        terms.append(_triple_convolution(params, x, cfg))
    total = sum(t ** n / math.factorial(n) * term for n, term in enumerate(terms, start=1))
    return math.exp(-t) * total


def total_mass(params, t, cfg=OUTER_DEFAULT, exponent=None, field_cfg=None):
    """2 ∫₀^∞ f_reg(ρ, t) dρ + exp(-t); equals 1 when nothing is lost."""
    if exponent is None:
        exponent = DirectExponent(params)
    field_cfg = field_cfg or cfg
    width = 1.0 / exponent_scale(exponent, t)
    density = np.vectorize(lambda rho: green_regular(params, rho, t, field_cfg, exponent), otypes=[float])
    regular = integrate_semi_infinite(density, cfg, scale=width)
    return 2 * regular + delta_weight(t)


@dataclass(frozen=True)
class ExactField:
    gamma: float
    t_mesh: LogMesh
    s_mesh: LogMesh
    values: np.ndarray = field(repr=False, compare=False)

    columns = ('t', 's', 'rho', 'f_reg')

    @property
    def delta_weights(self):
        return np.exp(-np.asarray(self.t_mesh.values))

    def rho(self):
        front = front_position(KernelParams(self.gamma), np.asarray(self.t_mesh.values))
        return front[:, None] / np.asarray(self.s_mesh.values)[None, :]

    def header(self):
        return dict(gamma=format_float(self.gamma), t_mesh=self.t_mesh.descriptor(), s_mesh=self.s_mesh.descriptor())

    def save(self, path):
        t, s = np.meshgrid(self.t_mesh.values, self.s_mesh.values, indexing='ij')
        data = np.column_stack([t.ravel(), s.ravel(), self.rho().ravel(), self.values.ravel()])
        write_table(path, self.header(), self.columns, data)

    @classmethod
    def load(cls, path):
        header, _, data = read_table(path)
        t_mesh = LogMesh.from_descriptor(header['t_mesh'])
        s_mesh = LogMesh.from_descriptor(header['s_mesh'])
        values = data[:, 3].reshape(len(t_mesh), len(s_mesh))
        return cls(float(header['gamma']), t_mesh, s_mesh, values)


# Per-process state for row workers, installed once by the pool initializer.
_worker = dict()


def _init_worker(params, exponent, cfg):
    _worker.update(params=params, exponent=exponent, cfg=cfg)


def _field_row(t, s_values, params, exponent, cfg):
    front = front_position(params, t)
    row = np.empty(len(s_values))
    for j, s in enumerate(s_values):
        rho = front / s
        try:
            row[j] = green_regular(params, rho, t, cfg, exponent)
        except EvaluationError as e:
            raise EvaluationError('exact field node failed', dict(gamma=params.gamma, t=t, s=s, rho=rho),
                                  cause=e.cause)
        if not (math.isfinite(row[j]) and row[j] >= 0):
            raise EvaluationError(f'regular part is {row[j]!r}', dict(gamma=params.gamma, t=t, s=s, rho=rho))
    return row


def _worker_row(t, s_values):
    return _field_row(t, s_values, _worker['params'], _worker['exponent'], _worker['cfg'])


def build_exponent_table(params, t_max, table_cfg=None, cache_dir=None, levy=None):
    return ExponentTable.build(params, t_max, cfg=table_cfg or TableConfig(), cache_dir=cache_dir, levy=levy)


def exact_field(params, t_mesh, s_mesh, cfg=OUTER_DEFAULT, exponent=None, workers=1):
    """Regular part of the Green's function on the (t, s) grid.

    Rows (one per t) are independent and are spread over `workers` processes.
    Every row is computed by the same code path whatever the worker count, so the
    field is bitwise identical for any value of `workers`.
    """
    if t_mesh.lo < 1:
        raise DomainError(f'exact fields start at t >= 1, got t_mesh.lo={t_mesh.lo!r}')
    if exponent is None:
        exponent = build_exponent_table(params, t_mesh.hi)
    t_values = [float(t) for t in t_mesh]
    s_values = [float(s) for s in s_mesh]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(params, exponent, cfg)) as executor:
            rows = list(executor.map(_worker_row, t_values, [s_values] * len(t_values)))
    else:
        rows = [_field_row(t, s_values, params, exponent, cfg) for t in t_values]
    values = np.vstack(rows)
    for t, row in zip(t_values, values):
        drops = np.diff(row) < -MONOTONE_SLACK * row.max()
        if drops.any():
            s = s_values[int(np.argmax(drops)) + 1]
            logger.warning('regular part increases with distance at gamma=%s t=%s near s=%s', params.gamma, t, s)
    values.flags.writeable = False
    return ExactField(params.gamma, t_mesh, s_mesh, values)
