import io
import os
import json
import tempfile
import numpy as np
from .errors import ArtifactError

FLOAT_FORMAT = '%.17g'


def format_float(value):
    return FLOAT_FORMAT % value


def format_header(header):
    return '# ' + ' '.join(f'{key}={value}' for key, value in header.items())


def parse_header(line, path=None):
    if not line.startswith('#'):
        raise ArtifactError(f'table {path} has no header line')
    fields = dict()
    for token in line[1:].split():
        key, sep, value = token.partition('=')
        if not sep:
            raise ArtifactError(f'malformed header token "{token}" in {path}')
        fields[key] = value
    return fields


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.' + os.path.basename(path) + '.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w') as fp:
            fp.write(text)
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_table(path, header, columns, data):
    data = np.asarray(data, dtype=float).reshape(-1, len(columns))
    buffer = io.StringIO()
    buffer.write(format_header(header) + '\n')
    buffer.write(','.join(columns) + '\n')
    np.savetxt(buffer, data, fmt=FLOAT_FORMAT, delimiter=',')
    atomic_write(path, buffer.getvalue())


def read_table(path):
    try:
        with open(path) as fp:
            lines = fp.read().splitlines()
    except FileNotFoundError:
        raise ArtifactError(f'missing table {path}')
    if len(lines) < 2:
        raise ArtifactError(f'truncated table {path}')
    header = parse_header(lines[0], path)
    columns = lines[1].split(',')
    rows = [line for line in lines[2:] if line]
    if not rows:
        return header, columns, np.empty((0, len(columns)))
    try:
        data = np.loadtxt(rows, delimiter=',', ndmin=2)
    except ValueError as e:
        raise ArtifactError(f'corrupt table {path}: {e}')
    if data.shape[1] != len(columns):
        raise ArtifactError(f'table {path} has {data.shape[1]} columns, header names {len(columns)}')
    return header, columns, data


def write_json(path, data):
    atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + '\n')


def read_json(path):
    try:
        with open(path) as fp:
            return json.load(fp)
    except FileNotFoundError:
        raise ArtifactError(f'missing file {path}')
    except json.JSONDecodeError as e:
        raise ArtifactError(f'corrupt JSON in {path}: {e}')
