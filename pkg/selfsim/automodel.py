import math
import logging
from dataclasses import dataclass, field
from functools import cached_property
import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as gamma_function
from .errors import DomainError
from .kernel import KernelParams, levy_constant
from .meshes import LogMesh
from .tables import format_float, read_table, write_table

logger = logging.getLogger(__name__)

EDGE_TOLERANCE = 5e-3
# Width, in decades of s, over which each end of a g curve is blended into its asymptote.
BLEND_DECADES = 1.0
# Values of s this many ulps outside the mesh still count as the end nodes.
END_ULPS = 8


def _positive(name, value, allow_zero=False):
    array = np.asarray(value, dtype=float)
    bad = (array < 0) if allow_zero else (array <= 0)
    if np.any(bad) or np.any(np.isnan(array)):
        raise DomainError(f'{name} must be {"non-negative" if allow_zero else "positive"}, got {value!r}')
    return array


def _scalar(array):
    return float(array) if np.ndim(array) == 0 else array


def front_position(params, t):
    """ρ_fr(t) = (t + 1)^(1/γ) - 1."""
    t = _positive('t', t, allow_zero=True)
    return _scalar(np.expm1(np.log1p(t) / params.gamma))


def similarity_s(params, rho, t):
    rho = _positive('rho', rho)
    return _scalar(front_position(params, t) / rho)


def similarity_rho(params, t, s):
    s = _positive('s', s)
    return _scalar(front_position(params, t) / s)


def similarity_t(params, rho, s):
    """t = (1 + s ρ)^γ - 1, the time at which distance ρ sits at similarity value s."""
    rho = _positive('rho', rho, allow_zero=True)
    s = _positive('s', s, allow_zero=True)
    return _scalar(np.expm1(params.gamma * np.log1p(s * rho)))


def similarity_maps(params, t=None, rho=None, s=None):
    given = [name for name, value in (('t', t), ('rho', rho), ('s', s)) if value is not None]
    if len(given) != 2:
        raise DomainError(f'exactly two of t, rho, s are needed, got {", ".join(given) or "none"}')
    if t is None:
        return similarity_t(params, rho, s)
    if rho is None:
        return similarity_rho(params, t, s)
    return similarity_s(params, rho, t)


def alpha_coefficient(params, levy=None):
    """Large-s slope of g: 2^(1/γ) [γπ/2 · I^(1/γ)]^(1/(γ+1))."""
    gamma = params.gamma
    levy = levy if levy is not None else levy_constant(params)
    return 2 ** (1 / gamma) * (gamma * math.pi / 2 * levy ** (1 / gamma)) ** (1 / (gamma + 1))


def on_axis_alpha(params, levy=None):
    """Large-s slope of g that makes the automodel density match the exact on-axis value.

    At ρ = 0 the exact density tends to Γ(1 + 1/γ) / (π (t I)^(1/γ)); equating it with
    tγ/2 (α ρ_fr)^-(γ+1) gives [γπ I^(1/γ) / (2 Γ(1 + 1/γ))]^(1/(γ+1)).
    """
    gamma = params.gamma
    levy = levy if levy is not None else levy_constant(params)
    base = gamma * math.pi * levy ** (1 / gamma) / (2 * gamma_function(1 + 1 / gamma))
    return float(base ** (1 / (gamma + 1)))


@dataclass(frozen=True)
class GCurve:
    """Scaling function g(s) on a log mesh with its two asymptotes.

    Inside the mesh log g is interpolated monotonically against log s. Within
    BLEND_DECADES of either end log g moves linearly in log s from the end value
    to the asymptote, g = 1 on the left and g = α s on the right, and equals the
    asymptote beyond that.
    """
    gamma: float
    s_mesh: LogMesh
    g_values: np.ndarray = field(repr=False, compare=False)
    alpha: float
    fitted_slope: float = None

    columns = ('s', 'g')

    def __post_init__(self):
        values = np.asarray(self.g_values, dtype=float)
        if values.shape != (len(self.s_mesh),):
            raise DomainError(f'g curve needs {len(self.s_mesh)} values, got shape {values.shape}')
        if not np.all(values > 0) or not np.all(np.isfinite(values)):
            raise DomainError('g values must be positive and finite')
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f'alpha must be positive, got {self.alpha!r}')
        object.__setattr__(self, 'g_values', values)

    @cached_property
    def _log_g(self):
        return PchipInterpolator(np.log(self.s_mesh.values), np.log(self.g_values), extrapolate=False)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        lo = self.s_mesh.values[0]
        hi = self.s_mesh.values[-1]
        slack = END_ULPS * np.finfo(float).eps
        left = s < lo * (1 - slack)
        right = s > hi * (1 + slack)
        inside = ~(left | right)
        log_s = np.log(s)
        span = BLEND_DECADES * math.log(10)

        result = np.empty_like(s)
        result[inside] = np.exp(self._log_g(np.clip(log_s[inside], math.log(lo), math.log(hi))))
        weight = np.clip((math.log(lo) - log_s[left]) / span, 0.0, 1.0)
        result[left] = np.exp((1 - weight) * math.log(self.g_values[0]))
        weight = np.clip((log_s[right] - math.log(hi)) / span, 0.0, 1.0)
        far = weight >= 1.0
        blended = np.exp((1 - weight) * math.log(self.g_values[-1]) + weight * np.log(self.alpha * s[right]))
        result[right] = np.where(far, self.alpha * s[right], blended)
        return _scalar(result)

    def edge_mismatch(self):
        left = abs(self.g_values[0] - 1.0)
        right = abs(self.g_values[-1] / (self.alpha * self.s_mesh.values[-1]) - 1.0)
        return max(left, right)

    def header(self):
        header = dict(gamma=format_float(self.gamma), alpha=format_float(self.alpha), s_mesh=self.s_mesh.descriptor())
        if self.fitted_slope is not None:
            header['fitted_slope'] = format_float(self.fitted_slope)
        return header

    def save(self, path):
        write_table(path, self.header(), self.columns, np.column_stack([self.s_mesh.values, self.g_values]))

    @classmethod
    def load(cls, path):
        header, _, data = read_table(path)
        slope = header.get('fitted_slope')
        return cls(float(header['gamma']), LogMesh.from_descriptor(header['s_mesh']), data[:, 1],
                   float(header['alpha']), float(slope) if slope is not None else None)


def automodel_density(curve, x, t):
    """f_auto = tγ/2 (1 + ρ g(ρ_fr/ρ))^-(γ+1), with ρ = |x|.

    On the axis ρ g(ρ_fr/ρ) is replaced by its limit α ρ_fr. x and t broadcast.
    """
    params = KernelParams(curve.gamma)
    gamma = curve.gamma
    t = _positive('t', t)
    rho = np.abs(np.asarray(x, dtype=float))
    rho, t = np.broadcast_arrays(rho, t)
    front = front_position(params, t)
    spread = np.empty(rho.shape)
    axis = rho == 0
    spread[axis] = curve.alpha * np.asarray(front)[axis]
    off = ~axis
    spread[off] = rho[off] * curve(np.asarray(front)[off] / rho[off])
    return _scalar(0.5 * gamma * t * (1.0 + spread) ** (-(gamma + 1)))


def automodel_density_at(curve, t, s):
    """f_auto at similarity value s, with ρ = ρ_fr(t)/s and g read at s itself."""
    params = KernelParams(curve.gamma)
    t = _positive('t', t)
    s = _positive('s', s)
    t, s = np.broadcast_arrays(t, s)
    rho = front_position(params, t) / s
    return _scalar(0.5 * curve.gamma * t * (1.0 + rho * curve(s)) ** (-(curve.gamma + 1)))
