import os
import math
import json
import hashlib
import logging
from dataclasses import dataclass, asdict
import numpy as np
from appdirs import user_cache_dir
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as gamma_function
from .errors import DomainError, ExtrapolationError, ArtifactError
from .meshes import log_mesh
from .quadrature import (INNER_DEFAULT, OscillatorKind, Wave, integrate_semi_infinite_oscillatory)
from .tables import format_float, read_table, write_table

logger = logging.getLogger(__name__)

# Sample points p_k = LEVY_P0 * 2**-k, k = 0 .. LEVY_SAMPLES-1, for the small-p limit of G(p)/p^gamma.
LEVY_P0 = 1e-3
LEVY_SAMPLES = 12
LEVY_REL_TOL = 1e-11
LEVY_AGREEMENT = 1e-6
TABLE_LOWER_MARGIN = 1e-4
SINE = OscillatorKind(Wave.SINE, 1.0)
COSINE = OscillatorKind(Wave.COSINE, 1.0)


@dataclass(frozen=True)
class KernelParams:
    gamma: float
    tau: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and 0 < self.gamma < 2):
            raise DomainError(f'gamma must lie in (0, 2), got {self.gamma!r}')
        if self.tau != 1.0:
            raise DomainError(f'time is measured in units of the waiting time, tau must be 1, got {self.tau!r}')


def step_pdf(params, rho):
    """W(rho) = gamma / (2 (1 + rho)^(gamma + 1)), normalized over the whole line."""
    values = np.asarray(rho, dtype=float)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise DomainError(f'step length must be non-negative, got {rho!r}')
    result = 0.5 * params.gamma * np.power(1.0 + values, -(params.gamma + 1))
    return float(result) if result.ndim == 0 else result


def _reduced_exponent(params, p, cfg):
    # F(p) = ∫₀^∞ sin(u) (u + p)^-γ du, so that G(p) = p^γ F(p).
    gamma = params.gamma
    envelope = lambda u: np.power(u + p, -gamma)
    return integrate_semi_infinite_oscillatory(envelope, SINE, cfg, scale=p)


def step_transform(params, p, cfg=INNER_DEFAULT):
    """Cosine transform of the step PDF, 1 - G(p).

    Computed as γ p^γ ∫₀^∞ cos(u) (u + p)^-(γ+1) du, which keeps full relative
    precision where G is close to 1.
    """
    p = float(p)
    if p < 0 or math.isnan(p):
        raise DomainError(f'p must be non-negative, got {p!r}')
    if p == 0:
        return 1.0
    gamma = params.gamma
    envelope = lambda u: np.power(u + p, -(gamma + 1))
    return gamma * p ** gamma * integrate_semi_infinite_oscillatory(envelope, COSINE, cfg, scale=p)


def characteristic_exponent(params, p, cfg=INNER_DEFAULT):
    """G(p) = p ∫₀^∞ sin(px) (1 + x)^-γ dx.

    Below p = 1 the sine integral is evaluated after the substitution u = px;
    above it G is taken as 1 - step_transform(p).
    """
    p = float(p)
    if p < 0 or math.isnan(p):
        raise DomainError(f'p must be non-negative, got {p!r}')
    if p == 0:
        return 0.0
    if p <= 1:
        return p ** params.gamma * _reduced_exponent(params, p, cfg)
    return 1.0 - step_transform(params, p, cfg)


def exponent_asymptote(params, p):
    """Two-term large-p expansion of 1 - G(p)."""
    gamma = params.gamma
    inv2 = 1.0 / np.square(p)
    return gamma * (gamma + 1) * inv2 * (1.0 - (gamma + 2) * (gamma + 3) * inv2)


def levy_constant_closed_form(gamma):
    if abs(1.0 - gamma) < 1e-12:
        return math.pi / 2
    return float(gamma_function(1.0 - gamma) * math.cos(math.pi * gamma / 2))


def _levy_basis(p, gamma):
    # F(p) = I + c1 p + c2 B(p) + c3 p² + ..., with B(p) → p ln p as γ → 1.
    if abs(1.0 - gamma) < 1e-6:
        singular = p * np.log(p)
    else:
        singular = (np.power(p, 2.0 - gamma) - p) / (1.0 - gamma)
    basis = np.column_stack([np.ones_like(p), p, singular, p * p])
    return basis / np.abs(basis).max(axis=0)


def _levy_fit(p, values, gamma):
    basis = _levy_basis(p, gamma)
    coefficients, _, _, _ = np.linalg.lstsq(basis, values, rcond=None)
    return float(coefficients[0])


def levy_constant(params, cfg=None):
    """I(γ) = lim G(p)/p^γ as p → 0.

    G(p)/p^γ is sampled on a geometric sequence of p and extrapolated to p = 0 by a
    least-squares fit on the known form of its small-p expansion. The fit is
    repeated without the largest p; the two limits must agree to 1e-6.
    """
    cfg = cfg or INNER_DEFAULT
    cfg = cfg.replace(rel_tol=min(cfg.rel_tol, LEVY_REL_TOL))
    p = LEVY_P0 * np.power(2.0, -np.arange(LEVY_SAMPLES))
    values = np.array([_reduced_exponent(params, pk, cfg) for pk in p])
    full = _levy_fit(p, values, params.gamma)
    reduced = _levy_fit(p[1:], values[1:], params.gamma)
    if not (math.isfinite(full) and abs(full - reduced) <= LEVY_AGREEMENT * abs(full)):
        raise ExtrapolationError(f'small-p limit of G(p)/p^gamma did not settle for gamma={params.gamma!r} '
                                 f'({full!r} vs {reduced!r})', sequence=values)
    logger.info('levy constant for gamma=%s: %r', params.gamma, full)
    return full


def damping(t, g, one_minus_g):
    """exp(-t G) - exp(-t), the Fourier transform of the regular part of the Green's function."""
    g = np.asarray(g, dtype=float)
    one_minus_g = np.asarray(one_minus_g, dtype=float)
    with np.errstate(over='ignore', under='ignore'):
        near = np.exp(-t * g) - math.exp(-t)
        far = math.exp(-t) * np.expm1(np.minimum(t * one_minus_g, 700.0))
    return np.where(g < 0.5, near, far)


@dataclass(frozen=True)
class TableConfig:
    points_per_decade: int = 200
    interp_tol: float = 1e-8
    max_refinements: int = 3
    p_max: float = 1e4

    def __post_init__(self):
        if int(self.points_per_decade) != self.points_per_decade or self.points_per_decade < 1:
            raise DomainError(f'points_per_decade must be a positive integer, got {self.points_per_decade!r}')
        if not 0 < self.interp_tol < 1:
            raise DomainError(f'interp_tol must lie in (0, 1), got {self.interp_tol!r}')
        if int(self.max_refinements) != self.max_refinements or self.max_refinements < 0:
            raise DomainError(f'max_refinements must be a non-negative integer, got {self.max_refinements!r}')
        if not self.p_max > 1:
            raise DomainError(f'p_max must exceed 1, got {self.p_max!r}')

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f'unknown table keys: {", ".join(sorted(unknown))}')
        return cls(**data)


def exponent_values(params, p, cfg=INNER_DEFAULT):
    g = np.empty_like(p)
    w = np.empty_like(p)
    for i, value in enumerate(p):
        if value > 1:
            w[i] = step_transform(params, value, cfg)
            g[i] = 1.0 - w[i]
        else:
            g[i] = characteristic_exponent(params, value, cfg)
            w[i] = 1.0 - g[i]
    return g, w


def table_lower_bound(levy, gamma, t_max):
    """Smallest tabulated p: far enough below the scale (t_max I)^(-1/γ) that I p^γ is exact."""
    return TABLE_LOWER_MARGIN * (t_max * levy) ** (-1.0 / gamma)


class DirectExponent:
    """G(p) and 1 - G(p) by direct quadrature at every point. Slow; used as an oracle."""

    def __init__(self, params, cfg=INNER_DEFAULT, levy=None):
        self.params = params
        self.cfg = cfg
        self.levy = levy if levy is not None else levy_constant(params)

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        g, w = exponent_values(self.params, p.ravel(), self.cfg)
        return g.reshape(p.shape), w.reshape(p.shape)

    def damping(self, t, p):
        return damping(t, *self.evaluate(p))


class ExponentTable:
    """Tabulated G(p) on a log mesh in p with monotone cubic interpolation.

    log G is interpolated against log p for p <= 1 and log(1 - G) above, so that
    both the small-p power law and the approach to 1 keep their relative
    precision. Outside the mesh the small-p law I p^γ and the large-p expansion
    take over.
    """

    columns = ('p', 'G', 'one_minus_G')

    def __init__(self, params, p, g, one_minus_g, levy, cfg, quad=INNER_DEFAULT):
        self.params = params
        self.quad = quad
        self.p = np.asarray(p, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.one_minus_g = np.asarray(one_minus_g, dtype=float)
        self.levy = levy
        self.cfg = cfg
        if np.any(self.g <= 0) or np.any(self.one_minus_g <= 0):
            raise DomainError(f'exponent table for gamma={params.gamma!r} has values outside (0, 1)')
        log_p = np.log(self.p)
        self._log_g = PchipInterpolator(log_p, np.log(self.g), extrapolate=False)
        self._log_w = PchipInterpolator(log_p, np.log(self.one_minus_g), extrapolate=False)

    @property
    def p_lo(self):
        return self.p[0]

    @property
    def p_hi(self):
        return self.p[-1]

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        gamma = self.params.gamma
        g = np.empty_like(p)
        w = np.empty_like(p)
        low = p < self.p_lo
        high = p > self.p_hi
        inside = ~(low | high)
        upper = inside & (p > 1)
        lower = inside & ~upper
        g[low] = self.levy * np.power(p[low], gamma)
        w[low] = 1.0 - g[low]
        w[high] = exponent_asymptote(self.params, p[high])
        g[high] = 1.0 - w[high]
        log_p = np.log(p[lower])
        g[lower] = np.exp(self._log_g(log_p))
        w[lower] = 1.0 - g[lower]
        log_p = np.log(p[upper])
        w[upper] = np.exp(self._log_w(log_p))
        g[upper] = 1.0 - w[upper]
        return g, w

    def __call__(self, p):
        return self.evaluate(p)[0]

    def damping(self, t, p):
        return damping(t, *self.evaluate(p))

    def interpolation_error(self, p, g, one_minus_g):
        ig, iw = self.evaluate(p)
        lower = p <= 1
        errors = np.where(lower, np.abs(ig / g - 1.0), np.abs(iw / one_minus_g - 1.0))
        return float(errors.max()) if errors.size else 0.0

    @classmethod
    def build(cls, params, t_max, cfg=None, quad=INNER_DEFAULT, cache_dir=None, levy=None):
        """Tabulate G for times up to t_max, reusing a cached table when one matches.

        The mesh density starts at cfg.points_per_decade. Every interval midpoint is
        checked against direct quadrature; while the check fails the midpoints are
        merged in, which is exactly the log mesh of twice the density.
        """
        cfg = cfg or TableConfig()
        if levy is None:
            levy = levy_constant(params)
        p_lo = table_lower_bound(levy, params.gamma, t_max)
        key = cache_key(params, cfg, p_lo, quad)
        cache_path = None
        if cache_dir is not False:
            cache_path = os.path.join(cache_dir or default_cache_dir(), f'gtable_{key}.csv')
            table = cls.load(cache_path, params, cfg, key, quad)
            if table is not None:
                return table

        density = cfg.points_per_decade
        p = np.array(log_mesh(p_lo, cfg.p_max, density).values)
        g, w = exponent_values(params, p, quad)
        for refinement in range(cfg.max_refinements + 1):
            table = cls(params, p, g, w, levy, cfg, quad)
            mid = np.sqrt(p[:-1] * p[1:])
            mg, mw = exponent_values(params, mid, quad)
            error = table.interpolation_error(mid, mg, mw)
            logger.info('exponent table gamma=%s density=%d points=%d error=%.3g',
                        params.gamma, density, len(p), error)
            if error <= cfg.interp_tol:
                break
            p = _interleave(p, mid)
            g = _interleave(g, mg)
            w = _interleave(w, mw)
            density *= 2
        else:
            table = cls(params, p, g, w, levy, cfg, quad)
            logger.warning('exponent table for gamma=%s missed the interpolation tolerance %g (last check %.3g); '
                           'using %d points per decade', params.gamma, cfg.interp_tol, error, density)
        if cache_path is not None:
            table.save(cache_path, key)
        return table

    def save(self, path, key=None):
        header = dict(gamma=format_float(self.params.gamma), levy=format_float(self.levy),
                      key=key or cache_key(self.params, self.cfg, self.p_lo, self.quad))
        write_table(path, header, self.columns, np.column_stack([self.p, self.g, self.one_minus_g]))

    @classmethod
    def load(cls, path, params, cfg, key=None, quad=INNER_DEFAULT):
        if not os.path.exists(path):
            return None
        try:
            header, columns, data = read_table(path)
        except ArtifactError as e:
            logger.warning('ignoring unreadable exponent table cache: %s', e)
            return None
        if tuple(columns) != cls.columns or (key is not None and header.get('key') != key):
            return None
        return cls(params, data[:, 0], data[:, 1], data[:, 2], float(header['levy']), cfg, quad)


def _interleave(coarse, fine):
    merged = np.empty(len(coarse) + len(fine))
    merged[0::2] = coarse
    merged[1::2] = fine
    return merged


def cache_key(params, cfg, p_lo, quad=INNER_DEFAULT):
    settings = dict(gamma=repr(params.gamma), p_lo=repr(float(p_lo)), table=cfg.to_dict(), quad=quad.to_dict())
    blob = json.dumps(settings, sort_keys=True)
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()[:16]


def default_cache_dir():
    return os.path.join(user_cache_dir('selfsim'), 'tables')
