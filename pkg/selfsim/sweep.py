import os
import json
import time
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
import numpy as np
from .version import __version__
from .errors import ArtifactError, DomainError, SelfSimError, StalePlanError
from .accuracy import AccuracyReport, build_report, locus_transition
from .automodel import GCurve, automodel_density_at
from .exact import exact_field
from .kernel import ExponentTable, KernelParams, TableConfig, levy_constant
from .meshes import LinearMesh, LogMesh, linear_mesh, log_mesh
from .quadrature import INNER_DEFAULT, OUTER_DEFAULT, QuadratureConfig
from .reconstruct import g_curve_from, q_field
from .tables import parse_header, read_json, read_table, write_json, write_table
from .tape import TapeRecorder

logger = logging.getLogger(__name__)

TASK_DIR = 'tasks'
CACHE_DIR = 'cache'
LOG_DIR = 'logs'
FIGURE_DIR = 'figures'
COMBINED_COLUMNS = ('t', 's', 'rho', 'f_exact_reg', 'f_auto', 'q_w', 'ratio')
BOUNDARY_COLUMNS = ('gamma', 't10', 't_star', 's_star', 'max_error_after_t10')
ARTIFACTS = dict(combined='{label}.csv', qfield='{label}_qfield.csv', gcurve='{label}_gcurve.csv',
                 report='{label}_report.json')
TOP_LEVEL_KEYS = {'gamma_mesh', 't_mesh', 's_mesh', 'quadrature', 'table', 'overrides', 'output_dir', 'parallelism'}
LINEAR_KEYS = {'lo', 'hi', 'step'}
LOG_KEYS = {'lo', 'hi', 'points_per_decade'}
STAGES = {'inner', 'outer'}


class TaskStatus(Enum):
    PENDING = 'PENDING'
    DONE = 'DONE'
    FAILED = 'FAILED'


def gamma_label(gamma):
    return f'gamma_{gamma:.2f}'


def _check_keys(where, data, allowed, required=()):
    if not isinstance(data, dict):
        raise DomainError(f'{where} must be a mapping, got {data!r}')
    unknown = set(data) - set(allowed)
    if unknown:
        raise DomainError(f'unknown keys in {where}: {", ".join(sorted(unknown))}')
    missing = set(required) - set(data)
    if missing:
        raise DomainError(f'missing keys in {where}: {", ".join(sorted(missing))}')


def _quadrature(base, data, where):
    _check_keys(where, data, QuadratureConfig.__dataclass_fields__)
    return QuadratureConfig.from_dict({**base.to_dict(), **data})


@dataclass
class SweepSpec:
    gamma_mesh: LinearMesh
    t_mesh: LogMesh
    s_mesh: LogMesh
    inner: QuadratureConfig = INNER_DEFAULT
    outer: QuadratureConfig = OUTER_DEFAULT
    table: TableConfig = field(default_factory=TableConfig)
    overrides: dict = field(default_factory=dict)
    output_dir: str = 'selfsim-output'
    parallelism: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        if int(self.parallelism) != self.parallelism or self.parallelism < 1:
            raise DomainError(f'parallelism must be a positive integer, got {self.parallelism!r}')
        if self.t_mesh.lo < 1:
            raise DomainError(f't mesh must start at t >= 1, got {self.t_mesh.lo!r}')
        for label, override in self.overrides.items():
            _check_keys(f'overrides.{label}', override, STAGES)
            for stage, values in override.items():
                _check_keys(f'overrides.{label}.{stage}', values, QuadratureConfig.__dataclass_fields__)

    def configs_for(self, gamma):
        override = self.overrides.get(f'{gamma:.2f}', {})
        inner = QuadratureConfig.from_dict({**self.inner.to_dict(), **override.get('inner', {})})
        outer = QuadratureConfig.from_dict({**self.outer.to_dict(), **override.get('outer', {})})
        return inner, outer

    def canonical(self):
        # Output location and worker count never change the numbers.
        data = self.to_dict()
        data.pop('output_dir')
        data.pop('parallelism')
        return data

    def to_dict(self):
        return dict(
            gamma_mesh=self.gamma_mesh.to_dict(),
            t_mesh=self.t_mesh.to_dict(),
            s_mesh=self.s_mesh.to_dict(),
            quadrature=dict(inner=self.inner.to_dict(), outer=self.outer.to_dict()),
            table=self.table.to_dict(),
            overrides=self.overrides,
            output_dir=self.output_dir,
            parallelism=self.parallelism,
        )

    @classmethod
    def from_dict(cls, data):
        _check_keys('sweep spec', data, TOP_LEVEL_KEYS, required=('gamma_mesh', 't_mesh', 's_mesh'))
        _check_keys('gamma_mesh', data['gamma_mesh'], LINEAR_KEYS, required=LINEAR_KEYS)
        _check_keys('t_mesh', data['t_mesh'], LOG_KEYS, required=LOG_KEYS)
        _check_keys('s_mesh', data['s_mesh'], LOG_KEYS, required=LOG_KEYS)
        quadrature = data.get('quadrature', {})
        _check_keys('quadrature', quadrature, STAGES)
        kwargs = dict(
            gamma_mesh=linear_mesh(**data['gamma_mesh']),
            t_mesh=log_mesh(**data['t_mesh']),
            s_mesh=log_mesh(**data['s_mesh']),
            inner=_quadrature(INNER_DEFAULT, quadrature.get('inner', {}), 'quadrature.inner'),
            outer=_quadrature(OUTER_DEFAULT, quadrature.get('outer', {}), 'quadrature.outer'),
            table=TableConfig.from_dict(data.get('table', {})),
            overrides=dict(data.get('overrides', {})),
        )
        if 'output_dir' in data:
            kwargs['output_dir'] = data['output_dir']
        if 'parallelism' in data:
            kwargs['parallelism'] = data['parallelism']
        return cls(**kwargs)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise DomainError(f'sweep spec is not valid JSON: {e}')
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path) as fp:
            return cls.from_json(fp.read())

    def save(self, path):
        write_json(path, self.to_dict())


def desk_spec(output_dir='selfsim-desk', parallelism=None):
    spec = SweepSpec(linear_mesh(0.5, 1.5, 0.5), log_mesh(30, 1e6, 100), log_mesh(0.01, 1000, 25),
                     output_dir=output_dir)
    if parallelism is not None:
        spec.parallelism = parallelism
    return spec


def full_spec(output_dir='selfsim-full', parallelism=None):
    spec = SweepSpec(linear_mesh(0.5, 1.5, 0.01), log_mesh(30, 1e8, 100), log_mesh(0.01, 1000, 100),
                     output_dir=output_dir)
    if parallelism is not None:
        spec.parallelism = parallelism
    return spec


def task_checksum(spec, gamma):
    """sha256 over the settings one task depends on, its γ and the code version."""
    override = spec.overrides.get(f'{gamma:.2f}')
    canonical = spec.canonical()
    canonical.pop('gamma_mesh')
    canonical['overrides'] = override
    payload = json.dumps(dict(spec=canonical, gamma=f'{gamma:.2f}', version=__version__), sort_keys=True)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def artifact_paths(output_dir, gamma):
    label = gamma_label(gamma)
    task_dir = os.path.join(output_dir, TASK_DIR)
    paths = {name: os.path.join(task_dir, pattern.format(label=label)) for name, pattern in ARTIFACTS.items()}
    paths['task'] = os.path.join(task_dir, f'{label}_task.json')
    return paths


@dataclass
class TaskResult:
    gamma: float
    status: TaskStatus
    checksum: str
    paths: dict = field(repr=False)
    wall_time: float = None
    error: dict = None

    @property
    def label(self):
        return gamma_label(self.gamma)

    def to_dict(self):
        data = dict(gamma=self.gamma, label=self.label, status=self.status.value, checksum=self.checksum,
                    artifacts={name: os.path.basename(path) for name, path in self.paths.items() if name != 'task'})
        if self.error is not None:
            data['error'] = self.error
        return data

    def save(self):
        write_json(self.paths['task'], self.to_dict())


def _artifacts_ok(paths):
    for name in ARTIFACTS:
        path = paths[name]
        if not os.path.exists(path):
            return False
        try:
            if path.endswith('.json'):
                read_json(path)
            else:
                with open(path) as fp:
                    parse_header(fp.readline(), path)
        except (ArtifactError, OSError):
            return False
    return True


def _recorded_status(path):
    if not os.path.exists(path):
        return None
    try:
        return read_json(path)
    except ArtifactError as e:
        logger.warning('ignoring unreadable task status: %s', e)
        return None


def task_status(spec, gamma):
    """DONE when the recorded run of this γ matches the spec and its files are intact, else PENDING."""
    checksum = task_checksum(spec, gamma)
    paths = artifact_paths(spec.output_dir, gamma)
    record = _recorded_status(paths['task'])
    status = TaskStatus.PENDING
    if (record is not None and record.get('status') == TaskStatus.DONE.value
            and record.get('checksum') == checksum and _artifacts_ok(paths)):
        status = TaskStatus.DONE
    return TaskResult(gamma, status, checksum, paths)


def plan(spec):
    return [task_status(spec, gamma) for gamma in sorted(float(g) for g in spec.gamma_mesh)]


def write_combined(path, exact, curve, qf, report):
    t, s = np.meshgrid(exact.t_mesh.values, exact.s_mesh.values, indexing='ij')
    rho = exact.rho()
    f_auto = automodel_density_at(curve, t, s)
    data = np.column_stack([t.ravel(), s.ravel(), rho.ravel(), np.asarray(exact.values).ravel(), f_auto.ravel(),
                            qf.q_values.ravel(), report.ratio.ravel()])
    write_table(path, exact.header(), COMBINED_COLUMNS, data)


def compute_field(spec, gamma, workers=1):
    """Lévy constant and exact field for one γ; the exponent table is cached under the output directory."""
    params = KernelParams(gamma)
    inner, outer = spec.configs_for(gamma)
    levy = levy_constant(params, inner)
    table = ExponentTable.build(params, spec.t_mesh.hi, cfg=spec.table, quad=inner,
                                cache_dir=os.path.join(spec.output_dir, CACHE_DIR), levy=levy)
    return levy, exact_field(params, spec.t_mesh, spec.s_mesh, outer, table, workers=workers)


def run_task(spec, gamma, workers=1):
    # The status file is written last: a task only counts as DONE once every artifact exists.
    gamma = float(gamma)
    paths = artifact_paths(spec.output_dir, gamma)
    levy, exact = compute_field(spec, gamma, workers)
    qf = q_field(exact)
    curve = g_curve_from(qf)
    report = build_report(exact, curve, levy)
    write_combined(paths['combined'], exact, curve, qf, report)
    qf.save(paths['qfield'])
    curve.save(paths['gcurve'])
    write_json(paths['report'], report.to_dict())
    result = TaskResult(gamma, TaskStatus.DONE, task_checksum(spec, gamma), paths)
    result.save()
    logger.info('%s done: t10=%s locus=(%s, %s)', result.label, report.t10, report.t_star, report.s_star)
    return result


def _execute(spec, gamma, workers):
    # Worker boundary: any failure becomes a FAILED status instead of stopping the sweep.
    start = time.perf_counter()
    try:
        result = run_task(spec, gamma, workers)
    except Exception as e:
        code = e.code if isinstance(e, SelfSimError) else type(e).__name__
        result = TaskResult(gamma, TaskStatus.FAILED, task_checksum(spec, gamma),
                            artifact_paths(spec.output_dir, gamma), error=dict(code=code, message=str(e)))
        result.save()
        logger.error('%s failed: %s', result.label, e)
    result.wall_time = time.perf_counter() - start
    return result


def check_plan(spec, tasks):
    expected = {float(g): task_checksum(spec, float(g)) for g in spec.gamma_mesh}
    given = {task.gamma: task.checksum for task in tasks}
    if given != expected:
        stale = sorted(g for g in set(expected) | set(given) if expected.get(g) != given.get(g))
        raise StalePlanError('plan does not match the sweep spec for ' + ', '.join(gamma_label(g) for g in stale))


def run(spec, tasks, tape=None):
    """Execute every task that is not DONE and return the updated plan.

    With at least as many pending tasks as workers, tasks run side by side with
    one process each; otherwise they run one after another and each spreads its
    rows over all workers.
    """
    check_plan(spec, tasks)
    os.makedirs(spec.output_dir, exist_ok=True)
    spec.save(os.path.join(spec.output_dir, 'spec.json'))
    tape = tape or TapeRecorder('sweep', os.path.join(spec.output_dir, LOG_DIR))
    tape.plan(tasks)
    results = {task.gamma: task for task in tasks}
    pending = [task.gamma for task in tasks if task.status is not TaskStatus.DONE]
    if spec.parallelism > 1 and len(pending) >= spec.parallelism:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as executor:
            futures = dict()
            for gamma in pending:
                tape.task_started(gamma)
                futures[executor.submit(_execute, spec, gamma, 1)] = gamma
            for future in as_completed(futures):
                results[futures[future]] = _record(tape, future.result())
    else:
        for gamma in pending:
            tape.task_started(gamma)
            results[gamma] = _record(tape, _execute(spec, gamma, spec.parallelism))
    return [results[gamma] for gamma in sorted(results)]


def _record(tape, result):
    if result.status is TaskStatus.DONE:
        tape.task_done(result.gamma, result.wall_time)
    else:
        tape.task_failed(result.gamma, result.error['code'], result.error['message'])
    return result


def _discover(output_dir):
    task_dir = os.path.join(output_dir, TASK_DIR)
    if not os.path.isdir(task_dir):
        raise ArtifactError(f'no task directory under {output_dir}')
    records = [read_json(os.path.join(task_dir, name)) for name in os.listdir(task_dir)
               if name.endswith('_task.json')]
    return sorted(records, key=lambda record: record['gamma'])


def load_report(output_dir, record):
    paths = artifact_paths(output_dir, record['gamma'])
    for name in ARTIFACTS:
        if not os.path.exists(paths[name]):
            raise ArtifactError(f'{record["label"]}: missing {name} artifact {paths[name]}')
    return AccuracyReport.from_dict(read_json(paths['report'])), paths


def aggregate(output_dir, tape=None):
    records = _discover(output_dir)
    done = [record for record in records if record['status'] == TaskStatus.DONE.value]
    if not done:
        raise ArtifactError(f'no completed task under {output_dir}')
    reports, rows, bundle = [], [], []
    for record in done:
        report, paths = load_report(output_dir, record)
        reports.append(report)
        rows.append([report.gamma, np.nan if report.t10 is None else report.t10, report.t_star, report.s_star,
                     report.max_error_after_t10])
        curve = GCurve.load(paths['gcurve'])
        bundle.append(np.column_stack([np.full(len(curve.s_mesh), curve.gamma), curve.s_mesh.values,
                                       curve.g_values]))
    gaps = [record['label'] for record in records if record['status'] != TaskStatus.DONE.value]
    header = dict(tasks=len(records), done=len(done), missing=','.join(gaps) or 'none')
    write_table(os.path.join(output_dir, 'boundary.csv'), header, BOUNDARY_COLUMNS, rows)
    write_table(os.path.join(output_dir, 'gcurves.csv'), header, ('gamma', 's', 'g'), np.vstack(bundle))
    spec_path = os.path.join(output_dir, 'spec.json')
    spec = SweepSpec.from_dict(read_json(spec_path)).canonical() if os.path.exists(spec_path) else None
    manifest = dict(version=__version__, spec=spec, locus_transition=locus_transition(reports),
                    tasks=[{key: record[key] for key in ('gamma', 'label', 'status', 'checksum', 'artifacts', 'error')
                            if key in record} for record in records])
    write_json(os.path.join(output_dir, 'manifest.json'), manifest)
    if tape is not None:
        tape.aggregate(len(rows))
    logger.info('aggregated %d of %d tasks in %s', len(done), len(records), output_dir)
    return rows


def export_figure_data(output_dir, figure, gammas=None):
    """Plot-ready CSVs from on-disk artifacts; returns the written paths.

    'fig2' copies the boundary table. 'fig345' writes, per γ, the long-format
    tables (s, t, Q), (s, t, Q / time average) and (s, t, ratio) for t >= t10.
    """
    figure_dir = os.path.join(output_dir, FIGURE_DIR)
    if figure == 'fig2':
        header, columns, data = read_table(os.path.join(output_dir, 'boundary.csv'))
        path = os.path.join(figure_dir, 'fig2.csv')
        write_table(path, header, columns, data)
        return [path]
    if figure != 'fig345':
        raise DomainError(f'unknown figure "{figure}"')
    written = []
    found = set()
    wanted = None if gammas is None else {gamma_label(g) for g in gammas}
    for record in _discover(output_dir):
        if wanted is not None and record['label'] not in wanted:
            continue
        if record['status'] != TaskStatus.DONE.value:
            if wanted is not None:
                raise ArtifactError(f'{record["label"]}: task is {record["status"]}, no figure data')
            continue
        found.add(record['label'])
        report, paths = load_report(output_dir, record)
        t_from = report.t10 if report.t10 is not None else np.inf
        _, _, q = read_table(paths['qfield'])
        _, _, combined = read_table(paths['combined'])
        keep = q[:, 0] >= t_from
        header = dict(gamma=f'{report.gamma:.2f}', t10='none' if report.t10 is None else repr(report.t10))
        panels = dict(fig_a=('q_w', q[keep, 2]), fig_b=('q_w_normalized', q[keep, 3]),
                      fig_c=('ratio', combined[combined[:, 0] >= t_from, 6]))
        for panel, (column, values) in panels.items():
            path = os.path.join(figure_dir, f'{panel}_{record["label"]}.csv')
            write_table(path, header, ('s', 't', column), np.column_stack([q[keep, 1], q[keep, 0], values]))
            written.append(path)
    if wanted is not None and wanted - found:
        raise ArtifactError(f'no task for {", ".join(sorted(wanted - found))}')
    return written
