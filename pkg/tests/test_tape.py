import json
from selfsim.sweep import TaskResult, TaskStatus
from selfsim.tape import TapeRecorder


def test_tape_is_created_lazily(tmp_path):
    tape = TapeRecorder('sweep', str(tmp_path / 'logs'))
    assert not (tmp_path / 'logs').exists()
    assert ':' not in tape.log_path.rsplit('/', 1)[-1]
    tape.close()


def test_tape_events(tmp_path):
    with TapeRecorder('sweep', str(tmp_path)) as tape:
        tape.plan([TaskResult(0.5, TaskStatus.PENDING, 'abc', {}), TaskResult(1.0, TaskStatus.DONE, 'def', {})])
        tape.task_started(0.5)
        tape.task_done(0.5, 1.25)
        tape.task_failed(1.5, 'quadrature', 'no convergence')
        tape.aggregate(2)
    with open(tape.log_path) as fp:
        events = [json.loads(line) for line in fp]
    assert [e['type'] for e in events] == ['plan', 'task_started', 'task_done', 'task_failed', 'aggregate']
    assert events[0]['tasks'] == [dict(gamma=0.5, status='PENDING'), dict(gamma=1.0, status='DONE')]
    assert events[2]['wall_time'] == 1.25
    assert events[3]['code'] == 'quadrature'
    assert all('timestamp' in e for e in events)
