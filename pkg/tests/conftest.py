import numpy as np
import pytest
from scipy.special import sici
from selfsim import sweep
from selfsim.automodel import GCurve, automodel_density_at
from selfsim.exact import ExactField
from selfsim.kernel import ExponentTable, KernelParams, TableConfig, damping, levy_constant_closed_form
from selfsim.meshes import linear_mesh, log_mesh

# Coarse table settings: accurate to a few 1e-6, quick to build.
COARSE_TABLE = TableConfig(points_per_decade=20, interp_tol=1e-5, max_refinements=0, p_max=1e3)


def cauchy_exponent(p):
    """G(p) for γ = 1 in closed form through the sine and cosine integrals."""
    p = np.asarray(p, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore'):
        si, ci = sici(p)
        g = np.where(p == 0, 0.0, p * (np.sin(p) * ci + np.cos(p) * (np.pi / 2 - si)))
    return float(g) if g.ndim == 0 else g


class CauchyExponent:
    """Exact exponent for γ = 1, interchangeable with an ExponentTable."""

    params = KernelParams(1.0)
    levy = np.pi / 2

    def evaluate(self, p):
        g = cauchy_exponent(p)
        return g, 1.0 - g

    def damping(self, t, p):
        return damping(t, *self.evaluate(p))


def smooth_g(s):
    """Scaling function with g -> 1 at small s and g -> 2s at large s."""
    s = np.asarray(s, dtype=float)
    return np.sqrt(1.0 + 4.0 * s * s)


def synthetic_exact(gamma, t_mesh, s_mesh, bump=0.3, decay=100.0):
    """Automodel density of smooth_g, perturbed at early times."""
    curve = GCurve(gamma, s_mesh, smooth_g(s_mesh.values), 2.0)
    t = np.asarray(t_mesh.values)[:, None]
    s = np.asarray(s_mesh.values)[None, :]
    values = automodel_density_at(curve, t, s) * (1.0 + bump * np.exp(-t / decay) * s / (1.0 + s))
    return ExactField(gamma, t_mesh, s_mesh, values)


def fake_compute_field(spec, gamma, workers=1):
    spec.configs_for(gamma)
    return levy_constant_closed_form(gamma), synthetic_exact(gamma, spec.t_mesh, spec.s_mesh)


@pytest.fixture
def synthetic_pipeline(monkeypatch):
    monkeypatch.setattr(sweep, 'compute_field', fake_compute_field)


@pytest.fixture
def small_spec(tmp_path):
    return sweep.SweepSpec(linear_mesh(0.5, 1.5, 0.5), log_mesh(30, 3e4, 5), log_mesh(0.01, 1000, 20),
                           output_dir=str(tmp_path / 'out'), parallelism=1)


@pytest.fixture(scope='session')
def cauchy():
    return KernelParams(1.0)


@pytest.fixture(scope='session')
def cauchy_table(cauchy):
    return ExponentTable.build(cauchy, 1.0, cfg=COARSE_TABLE, cache_dir=False, levy=np.pi / 2)
