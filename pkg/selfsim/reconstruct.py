import math
import logging
from dataclasses import dataclass, field
import numpy as np
from .errors import DomainError, EvaluationError
from .automodel import EDGE_TOLERANCE, GCurve
from .kernel import KernelParams
from .meshes import LogMesh
from .tables import format_float, write_table

logger = logging.getLogger(__name__)

# The large-s slope is fitted over the last half decade of the s mesh.
FIT_WINDOW_DECADES = 0.5
MIN_FIT_POINTS = 10


def q_w(params, rho, t, f):
    """Invert the automodel density for g: Q = [(γt / 2f)^(1/(γ+1)) - 1] / ρ.

    The root is polished with one Newton step so that applying this to an
    automodel density returns g to a few ulps.
    """
    rho = np.asarray(rho, dtype=float)
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    for name, value in (('rho', rho), ('t', t), ('f', f)):
        if np.any(~(value > 0)):
            raise DomainError(f'{name} must be positive, got {value!r}')
    gamma = params.gamma
    y = 0.5 * gamma * t / f
    order = gamma + 1
    root = y ** (1 / order)
    root = root * (1 + (y / root ** order - 1) / order)
    result = (root - 1) / rho
    return float(result) if result.ndim == 0 else result


def time_average(columns):
    columns = np.asarray(columns, dtype=float)
    count = columns.shape[0]
    return np.array([math.fsum(columns[:, j]) / count for j in range(columns.shape[1])])


@dataclass(frozen=True)
class QField:
    gamma: float
    t_mesh: LogMesh
    s_mesh: LogMesh
    q_values: np.ndarray = field(repr=False, compare=False)
    q_avg: np.ndarray = field(repr=False, compare=False)
    spread: np.ndarray = field(repr=False, compare=False)

    columns = ('t', 's', 'q_w', 'q_w_normalized')

    @classmethod
    def from_values(cls, gamma, t_mesh, s_mesh, q_values):
        q_values = np.asarray(q_values, dtype=float)
        if np.any(~(q_values > 0)):
            i, j = np.argwhere(~(q_values > 0))[0]
            raise EvaluationError(f'Q is {q_values[i, j]!r}', dict(gamma=gamma, t=t_mesh[i], s=s_mesh[j]))
        q_avg = time_average(q_values)
        spread = np.abs(q_values / q_avg - 1).max(axis=0)
        return cls(gamma, t_mesh, s_mesh, q_values, q_avg, spread)

    def normalized(self):
        return self.q_values / self.q_avg

    def restrict(self, t_from):
        keep = np.asarray(self.t_mesh.values) >= t_from
        if not keep.any():
            raise DomainError(f'no t mesh point at or after {t_from!r}')
        first = int(np.argmax(keep))
        return QField.from_values(self.gamma, _submesh(self.t_mesh, first), self.s_mesh, self.q_values[first:])

    def header(self):
        return dict(gamma=format_float(self.gamma), t_mesh=self.t_mesh.descriptor(), s_mesh=self.s_mesh.descriptor())

    def save(self, path):
        t, s = np.meshgrid(self.t_mesh.values, self.s_mesh.values, indexing='ij')
        data = np.column_stack([t.ravel(), s.ravel(), self.q_values.ravel(), self.normalized().ravel()])
        write_table(path, self.header(), self.columns, data)


def _submesh(mesh, first):
    values = mesh.values[first:]
    return LogMesh(float(values[0]), mesh.hi, mesh.points_per_decade, values)


def q_field(exact, params=None):
    params = params or KernelParams(exact.gamma)
    values = np.asarray(exact.values)
    bad = ~(values > 0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise EvaluationError(f'exact density is {values[i, j]!r}',
                              dict(gamma=exact.gamma, t=exact.t_mesh[i], s=exact.s_mesh[j]))
    t = np.asarray(exact.t_mesh.values)[:, None]
    q = q_w(params, exact.rho(), t, values)
    return QField.from_values(exact.gamma, exact.t_mesh, exact.s_mesh, q)


def collapse_spread(qf, t_from):
    return qf.restrict(t_from).spread


def g_curve_from(qf):
    """GCurve from the time-averaged Q.

    α is the least-squares fit of log g = log α + log s over the last half
    decade of s. The unconstrained log-log slope of the same window is kept
    as a diagnostic.
    """
    s = np.asarray(qf.s_mesh.values)
    g = np.asarray(qf.q_avg)
    window = s >= s[-1] * 10 ** -FIT_WINDOW_DECADES
    if window.sum() < MIN_FIT_POINTS:
        raise DomainError(f'the slope fit needs {MIN_FIT_POINTS} points in the last half decade of s, '
                          f'the mesh has {int(window.sum())}')
    log_s = np.log(s[window])
    log_g = np.log(g[window])
    alpha = math.exp(math.fsum(log_g - log_s) / len(log_s))
    slope = float(np.polyfit(log_s, log_g, 1)[0])
    curve = GCurve(qf.gamma, qf.s_mesh, g, alpha, slope)
    if np.any(np.diff(g) < 0):
        logger.warning('reconstructed g decreases somewhere for gamma=%s', qf.gamma)
    mismatch = curve.edge_mismatch()
    if mismatch > EDGE_TOLERANCE:
        logger.warning('g curve for gamma=%s ends %.3g away from its asymptotes; the end blends bridge the gap',
                       qf.gamma, mismatch)
    return curve
