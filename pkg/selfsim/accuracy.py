import logging
from dataclasses import dataclass, field, fields
from typing import Optional
import numpy as np
from .errors import DomainError, EvaluationError
from .automodel import alpha_coefficient, automodel_density_at, on_axis_alpha
from .kernel import KernelParams, levy_constant
from .meshes import LogMesh, log_mesh

logger = logging.getLogger(__name__)

BAND = 0.1
ALPHA_AGREEMENT = 0.1


def ratio_field(exact, curve):
    if exact.gamma != curve.gamma:
        raise DomainError(f'field is for gamma={exact.gamma!r}, curve for gamma={curve.gamma!r}')
    values = np.asarray(exact.values)
    bad = ~(values > 0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise EvaluationError(f'exact density is {values[i, j]!r}',
                              dict(gamma=exact.gamma, t=exact.t_mesh[i], s=exact.s_mesh[j]))
    t = np.asarray(exact.t_mesh.values)[:, None]
    s = np.asarray(exact.s_mesh.values)[None, :]
    return automodel_density_at(curve, t, s) / values


def row_errors(ratio):
    return np.abs(np.asarray(ratio) - 1.0).max(axis=1)


def _boundary_index(ratio, band=BAND):
    ok = row_errors(ratio) <= band
    index = len(ok)
    while index > 0 and ok[index - 1]:
        index -= 1
    return index if index < len(ok) else None


def t10_boundary(t_mesh, ratio, band=BAND):
    """Earliest mesh time from which every row of the ratio stays within 1 ± band, or None."""
    index = _boundary_index(ratio, band)
    return None if index is None else float(t_mesh[index])


def error_locus(t_mesh, s_mesh, ratio, t10):
    """(t*, s*) of the largest |ratio - 1| at or after t10; first in row-major order on ties."""
    first = 0
    if t10 is not None:
        first = int(np.searchsorted(np.asarray(t_mesh.values), t10))
    deviation = np.abs(np.asarray(ratio)[first:] - 1.0)
    i, j = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
    return float(t_mesh[first + i]), float(s_mesh[j]), float(deviation[i, j])


@dataclass
class AccuracyReport:
    gamma: float
    t_mesh: LogMesh
    s_mesh: LogMesh
    t10: Optional[float]
    t_star: float
    s_star: float
    max_error_after_t10: float
    alpha_fitted: float
    alpha_closed: float
    alpha_axis: float
    fitted_slope: Optional[float] = None
    ratio: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def reached(self):
        return self.t10 is not None

    @property
    def closed_ratio(self):
        return self.alpha_fitted / self.alpha_closed

    @property
    def axis_ratio(self):
        return self.alpha_fitted / self.alpha_axis

    def to_dict(self):
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != 'ratio'}
        data['t_mesh'] = self.t_mesh.to_dict()
        data['s_mesh'] = self.s_mesh.to_dict()
        data['closed_ratio'] = self.closed_ratio
        data['axis_ratio'] = self.axis_ratio
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop('closed_ratio', None)
        data.pop('axis_ratio', None)
        data['t_mesh'] = _mesh_from_dict(data['t_mesh'])
        data['s_mesh'] = _mesh_from_dict(data['s_mesh'])
        return cls(**data)


def _mesh_from_dict(data):
    return log_mesh(data['lo'], data['hi'], data['points_per_decade'])


def build_report(exact, curve, levy=None):
    params = KernelParams(exact.gamma)
    levy = levy if levy is not None else levy_constant(params)
    ratio = ratio_field(exact, curve)
    t10 = t10_boundary(exact.t_mesh, ratio)
    t_star, s_star, worst = error_locus(exact.t_mesh, exact.s_mesh, ratio, t10)
    report = AccuracyReport(gamma=exact.gamma, t_mesh=exact.t_mesh, s_mesh=exact.s_mesh, t10=t10,
                            t_star=t_star, s_star=s_star, max_error_after_t10=worst,
                            alpha_fitted=curve.alpha, alpha_closed=alpha_coefficient(params, levy),
                            alpha_axis=on_axis_alpha(params, levy), fitted_slope=curve.fitted_slope, ratio=ratio)
    if t10 is None:
        logger.warning('automodel density never stays within %g of the exact one for gamma=%s', BAND, exact.gamma)
    if abs(report.closed_ratio - 1) > ALPHA_AGREEMENT:
        logger.warning('fitted large-s slope %.6g differs from the closed-form alpha %.6g by a factor %.4g '
                       '(on-axis alpha %.6g) for gamma=%s', report.alpha_fitted, report.alpha_closed,
                       report.closed_ratio, report.alpha_axis, exact.gamma)
    return report


def locus_transition(reports, s_split=1.0):
    """Smallest γ whose error locus sits at s* < s_split right after one at s* >= s_split."""
    ordered = sorted(reports, key=lambda r: r.gamma)
    for before, after in zip(ordered, ordered[1:]):
        if before.s_star >= s_split > after.s_star:
            return after.gamma
    return None
