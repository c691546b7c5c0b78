import os
import time
import json
from datetime import datetime


class TapeRecorder:
    # NOTE: the only output with wall-clock data; the file appears on the first event.

    def __init__(self, prefix, log_dir):
        date = datetime.now().isoformat().replace(':', '-')
        log_name = f'{prefix}_{date}.jl'
        self.log_dir = log_dir
        self.log_path = os.path.join(log_dir, log_name)
        self.fp = None

    def __del__(self):
        self.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def log(self, typ, data=None):
        data = dict(data or {})
        data['type'] = typ
        data['timestamp'] = time.time()
        if self.fp is None:
            os.makedirs(self.log_dir, exist_ok=True)
            self.fp = open(self.log_path, 'a')
        self.fp.write(json.dumps(data, default=str) + '\n')
        self.fp.flush()

    def close(self):
        if self.fp is not None:
            self.fp.close()
            self.fp = None

    def plan(self, tasks):
        self.log('plan', dict(tasks=[dict(gamma=t.gamma, status=t.status.value) for t in tasks]))

    def task_started(self, gamma):
        self.log('task_started', dict(gamma=gamma))

    def task_done(self, gamma, wall_time):
        self.log('task_done', dict(gamma=gamma, wall_time=wall_time))

    def task_failed(self, gamma, code, message):
        self.log('task_failed', dict(gamma=gamma, code=code, message=message))

    def aggregate(self, rows):
        self.log('aggregate', dict(rows=rows))
