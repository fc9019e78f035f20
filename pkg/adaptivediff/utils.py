import csv
import hashlib
import json
import logging
import os

import numpy as np


logger = logging.getLogger(__name__)


def is_near(a, b, tol=1.e-11, reltol=1.e-10):
    """
    Check near-equality between two floats to a certain tolerance.

    Arguments
    ---------
    a : float
        First number
    b : float
        Second number
    tol : float
        Absolute tolerance for near-equality
    reltol : float
        Relative tolerance for near-equality

    Returns
    -------
    return : boolean
        True if a and b are near-equal
    """
    # Neglect relative error if numbers are close to zero
    if np.abs(b) > 1.e-10:
        return np.abs(a-b) < tol or np.abs(a/b-1) < reltol
    else:
        return np.abs(a-b) < tol


def derive_seed(master, index):
    """
    Derives a per-run seed from a master seed by stable hashing, so that
    seeds do not depend on the order in which runs are scheduled.

    Arguments
    ---------
    master : int
        Master seed
    index : int
        Run index

    Returns
    -------
    return : int
        Unsigned 63-bit seed
    """
    digest = hashlib.sha256(('%d:%d' % (master, index)).encode()).digest()
    return int.from_bytes(digest[:8], 'little') >> 1


def config_hash(record):
    """
    Hash of a configuration record, used to tag emitted files.

    Arguments
    ---------
    record : dict
        JSON-serialisable configuration

    Returns
    -------
    return : string
        First 16 hex digits of the sha256 of the sorted JSON dump
    """
    dump = json.dumps(record, sort_keys=True, default=_to_builtin)
    return hashlib.sha256(dump.encode()).hexdigest()[:16]


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError('Cannot serialise %r' % type(value))


def ensure_dir(location):
    """
    Creates a directory if it does not exist yet.
    """
    if location:
        os.makedirs(location, exist_ok=True)
    return location


def write_csv(filename, header, rows, tag=None):
    """
    Writes a CSV file with an optional comment line and a header row.

    Arguments
    ---------
    filename : string
        Output file name
    header : list of string
        Column names
    rows : iterable of sequence
        Data rows
    tag : string
        Configuration hash written as '# config_hash=<tag>' before the header
    """
    ensure_dir(os.path.dirname(filename))
    with open(filename, 'w', newline='') as f:
        if tag is not None:
            f.write('# config_hash=%s\n' % tag)
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
    logger.debug('Wrote %s', filename)


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    return value


def read_csv(filename):
    """
    Reads a CSV file written by write_csv(), skipping comment lines.

    Arguments
    ---------
    filename : string
        CSV file name

    Returns
    -------
    return : list of dict
        One dictionary per row, keyed by the header
    """
    with open(filename, 'r', newline='') as f:
        lines = [line for line in f if not line.startswith('#')]
    return list(csv.DictReader(lines))


def write_json(filename, record):
    """
    Writes a JSON document with sorted keys so that equal records produce
    byte-identical files.
    """
    ensure_dir(os.path.dirname(filename))
    with open(filename, 'w') as f:
        json.dump(record, f, indent=2, sort_keys=True, default=_to_builtin)
        f.write('\n')
    logger.debug('Wrote %s', filename)


def read_json(filename):
    with open(filename, 'r') as f:
        return json.load(f)
