import os
import json
import numpy as np
import pytest
from selfsim import sweep
from selfsim.accuracy import AccuracyReport
from selfsim.automodel import GCurve
from selfsim.errors import ArtifactError, DomainError, StalePlanError
from selfsim.kernel import TableConfig
from selfsim.meshes import linear_mesh, log_mesh
from selfsim.reconstruct import QField, collapse_spread
from selfsim.sweep import (SweepSpec, TaskStatus, aggregate, artifact_paths, desk_spec, export_figure_data,
                           full_spec, gamma_label, plan, run, task_checksum)
from selfsim.tables import read_json, read_table


def read_text(path):
    with open(path) as fp:
        return fp.read()


def test_spec_round_trip(small_spec):
    again = SweepSpec.from_json(small_spec.to_json())
    assert again.to_dict() == small_spec.to_dict()
    assert 'output_dir' not in small_spec.canonical()


@pytest.mark.parametrize('patch', [
    {'colour': 'blue'},
    {'t_mesh': {'lo': 30, 'hi': 100, 'ppd': 5}},
    {'quadrature': {'middle': {}}},
    {'quadrature': {'inner': {'tolerance': 1e-3}}},
    {'overrides': {'1.00': {'outer': {'tolerance': 1e-3}}}},
    {'table': {'density': 3}},
])
def test_spec_rejects_unknown_keys(small_spec, patch):
    data = {**small_spec.to_dict(), **patch}
    with pytest.raises(DomainError):
        SweepSpec.from_dict(data)


def test_spec_rejects_early_times():
    with pytest.raises(DomainError):
        SweepSpec(linear_mesh(0.5, 1.5, 0.5), log_mesh(0.5, 100, 2), log_mesh(1, 10, 2))


def test_preset_specs():
    assert len(desk_spec().gamma_mesh) == 3
    full = full_spec()
    assert (len(full.gamma_mesh), len(full.t_mesh), len(full.s_mesh)) == (101, 653, 501)


def test_checksum_ignores_location_and_workers(small_spec):
    moved = SweepSpec.from_dict({**small_spec.to_dict(), 'output_dir': '/elsewhere', 'parallelism': 8})
    assert task_checksum(moved, 1.0) == task_checksum(small_spec, 1.0)
    assert task_checksum(small_spec, 1.0) != task_checksum(small_spec, 1.5)
    other = SweepSpec.from_dict({**small_spec.to_dict(), 'overrides': {'1.50': {'inner': {'rel_tol': 1e-9}}}})
    assert task_checksum(other, 1.0) == task_checksum(small_spec, 1.0)
    assert task_checksum(other, 1.5) != task_checksum(small_spec, 1.5)


def test_gamma_labels():
    assert gamma_label(0.5) == 'gamma_0.50'
    assert gamma_label(1.0000000001) == 'gamma_1.00'


def test_fresh_plan_is_all_pending(small_spec):
    tasks = plan(small_spec)
    assert [t.gamma for t in tasks] == [0.5, 1.0, 1.5]
    assert all(t.status is TaskStatus.PENDING for t in tasks)


def test_run_and_resume(small_spec, synthetic_pipeline, monkeypatch):
    tasks = run(small_spec, plan(small_spec))
    assert all(t.status is TaskStatus.DONE for t in tasks)
    first = {name: read_text(path) for name, path in artifact_paths(small_spec.output_dir, 1.0).items()}
    assert all(t.status is TaskStatus.DONE for t in plan(small_spec))

    def fail(*args, **kwargs):
        raise AssertionError('finished task was recomputed')
    monkeypatch.setattr(sweep, 'run_task', fail)
    again = run(small_spec, plan(small_spec))
    assert [t.status for t in again] == [TaskStatus.DONE] * 3
    second = {name: read_text(path) for name, path in artifact_paths(small_spec.output_dir, 1.0).items()}
    assert second == first
    assert os.path.exists(os.path.join(small_spec.output_dir, 'spec.json'))
    assert os.listdir(os.path.join(small_spec.output_dir, 'logs'))


def test_results_do_not_depend_on_output_location(tmp_path, small_spec, synthetic_pipeline):
    run(small_spec, plan(small_spec))
    moved = SweepSpec.from_dict({**small_spec.to_dict(), 'output_dir': str(tmp_path / 'other')})
    run(moved, plan(moved))
    for name in ('combined', 'qfield', 'gcurve', 'report', 'task'):
        left = read_text(artifact_paths(small_spec.output_dir, 0.5)[name])
        right = read_text(artifact_paths(moved.output_dir, 0.5)[name])
        assert left == right


def test_damaged_artifact_reopens_task(small_spec, synthetic_pipeline):
    run(small_spec, plan(small_spec))
    os.remove(artifact_paths(small_spec.output_dir, 1.5)['gcurve'])
    statuses = {t.gamma: t.status for t in plan(small_spec)}
    assert statuses == {0.5: TaskStatus.DONE, 1.0: TaskStatus.DONE, 1.5: TaskStatus.PENDING}


def test_changed_spec_reopens_tasks(small_spec, synthetic_pipeline):
    run(small_spec, plan(small_spec))
    changed = SweepSpec.from_dict({**small_spec.to_dict(), 'table': TableConfig(points_per_decade=50).to_dict()})
    assert all(t.status is TaskStatus.PENDING for t in plan(changed))


def test_stale_plan_is_refused(small_spec):
    tasks = plan(small_spec)
    changed = SweepSpec.from_dict({**small_spec.to_dict(), 'gamma_mesh': {'lo': 0.5, 'hi': 1.5, 'step': 0.25}})
    with pytest.raises(StalePlanError):
        run(changed, tasks)


def test_failed_task_does_not_stop_the_sweep(small_spec, synthetic_pipeline):
    broken = SweepSpec.from_dict({**small_spec.to_dict(), 'overrides': {'1.00': {'outer': {'rel_tol': 0}}}})
    tasks = run(broken, plan(broken))
    assert [t.status for t in tasks] == [TaskStatus.DONE, TaskStatus.FAILED, TaskStatus.DONE]
    record = read_json(artifact_paths(broken.output_dir, 1.0)['task'])
    assert record['status'] == 'FAILED'
    assert record['error']['code'] == 'domain'
    assert not os.path.exists(artifact_paths(broken.output_dir, 1.0)['report'])

    rows = aggregate(broken.output_dir)
    assert [row[0] for row in rows] == [0.5, 1.5]
    header, columns, data = read_table(os.path.join(broken.output_dir, 'boundary.csv'))
    assert header['missing'] == 'gamma_1.00'
    assert tuple(columns) == sweep.BOUNDARY_COLUMNS
    manifest = read_json(os.path.join(broken.output_dir, 'manifest.json'))
    assert [t['status'] for t in manifest['tasks']] == ['DONE', 'FAILED', 'DONE']


def test_aggregate(small_spec, synthetic_pipeline):
    run(small_spec, plan(small_spec))
    rows = aggregate(small_spec.output_dir)
    assert [row[0] for row in rows] == [0.5, 1.0, 1.5]
    _, columns, bundle = read_table(os.path.join(small_spec.output_dir, 'gcurves.csv'))
    assert columns == ['gamma', 's', 'g']
    assert bundle.shape == (3 * len(small_spec.s_mesh), 3)
    manifest = read_json(os.path.join(small_spec.output_dir, 'manifest.json'))
    assert manifest['spec'] == json.loads(json.dumps(small_spec.canonical()))
    assert 'wall_time' not in json.dumps(manifest)
    first = read_text(os.path.join(small_spec.output_dir, 'boundary.csv'))
    aggregate(small_spec.output_dir)
    assert read_text(os.path.join(small_spec.output_dir, 'boundary.csv')) == first


def test_aggregate_reports_missing_artifact(small_spec, synthetic_pipeline):
    run(small_spec, plan(small_spec))
    os.remove(artifact_paths(small_spec.output_dir, 1.0)['report'])
    with pytest.raises(ArtifactError) as info:
        aggregate(small_spec.output_dir)
    assert 'gamma_1.00' in str(info.value)


def test_aggregate_without_tasks(tmp_path):
    with pytest.raises(ArtifactError):
        aggregate(str(tmp_path))


def test_figure_exports(small_spec, synthetic_pipeline):
    run(small_spec, plan(small_spec))
    aggregate(small_spec.output_dir)
    [fig2] = export_figure_data(small_spec.output_dir, 'fig2')
    assert os.path.basename(fig2) == 'fig2.csv'
    _, columns, data = read_table(fig2)
    assert data.shape == (3, len(sweep.BOUNDARY_COLUMNS))

    paths = export_figure_data(small_spec.output_dir, 'fig345', gammas=[1.0])
    assert sorted(os.path.basename(p) for p in paths) == ['fig_a_gamma_1.00.csv', 'fig_b_gamma_1.00.csv',
                                                          'fig_c_gamma_1.00.csv']
    header, columns, data = read_table(paths[0])
    assert columns == ['s', 't', 'q_w']
    assert np.all(data[:, 1] >= float(header['t10']))
    with pytest.raises(ArtifactError):
        export_figure_data(small_spec.output_dir, 'fig345', gammas=[0.7])
    with pytest.raises(DomainError):
        export_figure_data(small_spec.output_dir, 'fig9')


@pytest.mark.slow
def test_pool_runs_match_serial_runs(tmp_path):
    def spec(name, parallelism):
        return SweepSpec(linear_mesh(0.8, 1.2, 0.4), log_mesh(30, 100, 2), log_mesh(1, 10, 20),
                         table=TableConfig(points_per_decade=5, interp_tol=1e-2, max_refinements=0, p_max=100),
                         output_dir=str(tmp_path / name), parallelism=parallelism)
    serial = spec('serial', 1)
    pooled = spec('pooled', 2)
    assert all(t.status is TaskStatus.DONE for t in run(serial, plan(serial)))
    assert all(t.status is TaskStatus.DONE for t in run(pooled, plan(pooled)))
    for gamma in (0.8, 1.2):
        for name in ('combined', 'qfield', 'gcurve', 'report', 'task'):
            left = read_text(artifact_paths(serial.output_dir, gamma)[name])
            right = read_text(artifact_paths(pooled.output_dir, gamma)[name])
            assert left == right


# Published boundaries, reached on the full mesh to t = 1e8.
PUBLISHED_T10 = {0.5: 33.66, 1.0: 46.47, 1.5: 1853.15}


@pytest.fixture(scope='module')
def desk_run(tmp_path_factory):
    spec = desk_spec(str(tmp_path_factory.mktemp('desk')), parallelism=min(3, os.cpu_count() or 1))
    tasks = run(spec, plan(spec))
    assert all(t.status is TaskStatus.DONE for t in tasks)
    aggregate(spec.output_dir)
    reports = {}
    for gamma in (0.5, 1.0, 1.5):
        paths = artifact_paths(spec.output_dir, gamma)
        report = AccuracyReport.from_dict(read_json(paths['report']))
        shape = (len(spec.t_mesh), len(spec.s_mesh))
        _, _, data = read_table(paths['qfield'])
        qf = QField.from_values(gamma, spec.t_mesh, spec.s_mesh, data[:, 2].reshape(shape))
        _, columns, data = read_table(paths['combined'])
        ratio = data[:, columns.index('ratio')].reshape(shape)
        reports[gamma] = (report, GCurve.load(paths['gcurve']), qf, ratio)
    return spec, reports


@pytest.mark.slow
def test_desk_boundaries_are_ordered(desk_run):
    _, reports = desk_run
    t10 = {gamma: report.t10 for gamma, (report, _, _, _) in reports.items()}
    assert t10[0.5] < t10[1.0] < t10[1.5]
    for gamma, value in t10.items():
        assert value <= PUBLISHED_T10[gamma] * 1.05


@pytest.mark.slow
def test_desk_rows_after_boundary_stay_in_band(desk_run):
    spec, reports = desk_run
    for report, _, _, ratio in reports.values():
        first = int(np.searchsorted(np.asarray(spec.t_mesh.values), report.t10))
        assert np.abs(ratio[first:] - 1).max() <= 0.1
        if first > 0:
            assert np.abs(ratio[first - 1] - 1).max() > 0.1


@pytest.mark.slow
def test_desk_far_front_and_locus(desk_run):
    _, reports = desk_run
    for gamma in (1.0, 1.5):
        _, curve, _, _ = reports[gamma]
        assert curve.g_values[0] == pytest.approx(1.0, abs=0.05)
    report, _, _, _ = reports[1.5]
    assert 0.05 <= report.s_star <= 1.0


@pytest.mark.slow
def test_desk_collapse_after_boundary(desk_run):
    _, reports = desk_run
    for gamma in (1.0, 1.5):
        report, _, qf, _ = reports[gamma]
        assert collapse_spread(qf, report.t10).max() <= 0.1
