# archive.py
# SF4 field snapshots and trajectory archives (snapshot files + JSON manifest)

import os
import csv
import json
import struct

import numpy as np

from .grid import COMPONENTS, GridSpec, SpectralField4
from .logging import setup_logger, log_event

archive_logger = setup_logger('archive', 'system.log')
error_logger = setup_logger('error', 'error.log')

SF4_MAGIC = b'SF4\x00'
# magic, n_per_axis, box_length, time, real_valued flag (little-endian, packed)
SF4_HEADER = struct.Struct('<4sIddB')
MANIFEST_NAME = 'manifest.json'


def encode_snapshot(field):
    """SpectralField4 -> SF4 bytes (4 components interleaved per mode)"""
    header = SF4_HEADER.pack(SF4_MAGIC, field.grid.n_per_axis, field.grid.box_length,
                             field.time, 1 if field.real_valued else 0)
    body = np.ascontiguousarray(np.moveaxis(field.coeffs, 0, -1)).astype('<c16')
    return header + body.tobytes()


def decode_snapshot(data):
    """SF4 bytes -> SpectralField4; ValueError on a corrupt payload"""
    if len(data) < SF4_HEADER.size:
        raise ValueError(f"SF4 payload too short for a header ({len(data)} bytes)")
    magic, n, box_length, time, flag = SF4_HEADER.unpack_from(data)
    if magic != SF4_MAGIC:
        raise ValueError(f"bad SF4 magic {magic!r}")
    expected = n ** 3 * COMPONENTS * 16
    body = data[SF4_HEADER.size:]
    if len(body) != expected:
        raise ValueError(f"SF4 body holds {len(body)} bytes, expected {expected}")
    grid = GridSpec(n_per_axis=n, box_length=box_length)
    values = np.frombuffer(body, dtype='<c16').reshape(grid.shape + (COMPONENTS,))
    return SpectralField4(grid=grid, coeffs=np.moveaxis(values, -1, 0).astype(np.complex128),
                          real_valued=bool(flag), time=time)


def write_snapshot(field, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        f.write(encode_snapshot(field))
    return path


def read_snapshot(path):
    try:
        with open(path, 'rb') as f:
            return decode_snapshot(f.read())
    except (OSError, ValueError) as e:
        log_event(error_logger, 'ERROR', 'Could not read SF4 snapshot', path=path, error=str(e))
        raise


def snapshot_name(index):
    return f"snapshot_{index:04d}.sf4"


def write_archive(trajectory, directory, manifest, snapshot_norms=None, write_snapshots=True):
    """
    Write every saved time as an SF4 file plus manifest.json.

    manifest carries run metadata (params, report, seed, timestamp); the
    time grid and per-snapshot norms are added here.
    """
    os.makedirs(directory, exist_ok=True)
    snapshots = []
    for index in range(len(trajectory)):
        entry = {'index': index, 'time': float(trajectory.times[index])}
        if write_snapshots:
            name = snapshot_name(index)
            write_snapshot(trajectory.field(index), os.path.join(directory, name))
            entry['file'] = name
        if snapshot_norms is not None:
            entry['norms'] = snapshot_norms[index]
        snapshots.append(entry)

    document = dict(manifest)
    document.update({
        'format': 'SF4',
        'grid': {'n_per_axis': trajectory.grid.n_per_axis, 'box_length': trajectory.grid.box_length},
        'real_valued': trajectory.real_valued,
        'times': [float(t) for t in trajectory.times],
        'snapshots': snapshots,
    })
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, 'w') as f:
        json.dump(json_safe(document), f, indent=2, default=str)
    log_event(archive_logger, 'INFO', 'Trajectory archive written', directory=directory,
              snapshots=len(snapshots))
    return path


def load_archive(directory):
    """Read manifest.json and every referenced snapshot back into a Trajectory"""
    from .solver import Trajectory

    path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(path, 'r') as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        log_event(error_logger, 'ERROR', 'Could not read archive manifest', path=path, error=str(e))
        raise

    entries = manifest.get('snapshots', [])
    if not entries or any('file' not in entry for entry in entries):
        raise ValueError(f"archive {directory} was written without snapshot files")
    fields = [read_snapshot(os.path.join(directory, entry['file'])) for entry in entries]
    grid = fields[0].grid
    for field in fields[1:]:
        if not field.grid.same_lattice(grid):
            raise ValueError(f"archive {directory} mixes grids")
    trajectory = Trajectory(grid=grid, times=np.array([f.time for f in fields]),
                            coeffs=np.stack([f.coeffs for f in fields]),
                            real_valued=bool(manifest.get('real_valued', fields[0].real_valued)))
    return trajectory, manifest


def json_safe(value):
    """Non-finite floats become strings so reports stay strict JSON"""
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def append_jsonl(path, records):
    """Append one JSON object per line"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'a') as f:
        for record in records:
            f.write(json.dumps(json_safe(record), sort_keys=True) + '\n')
    return path


def read_jsonl(path):
    records = []
    try:
        with open(path, 'r') as f:
            for number, line in enumerate(f, start=1):
                line = line.strip()
                if line:
                    records.append(json.loads(line))
    except json.JSONDecodeError as e:
        log_event(error_logger, 'ERROR', 'Corrupt JSON-lines report', path=path, line=number, error=str(e))
        raise
    return records


def write_csv_table(rows, path):
    """rows: list of flat dicts; columns are the union of keys in first-seen order"""
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(json_safe(row))
    log_event(archive_logger, 'INFO', 'CSV table written', path=path, rows=len(rows))
    return path
