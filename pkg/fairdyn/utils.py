import os
import hashlib
import argparse

import numpy as np


class Color:
    """
        Colors class for use with terminal.
    """
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


def default(x, default):
    """ Returns x if x is not none, otherwise default. """
    return x if x is not None else default


def str2bool(v):
    """
        Convert from string in various formats to boolean.
    """
    if isinstance(v, bool):
        return v
    if v.lower() in ('yes', 'true', 't', 'y', '1'):
        return True
    elif v.lower() in ('no', 'false', 'f', 'n', '0'):
        return False
    else:
        raise argparse.ArgumentTypeError('Boolean value expected.')


def moving_average(X, window: int = 1):
    """
    Centered moving average with edge padding, output has the same length as the input.
    A window of 1 returns a copy of X.
    """
    X = np.asarray(X, dtype=np.float64)
    window = int(window)
    if window <= 1 or len(X) == 0:
        return X.copy()
    left = (window - 1) // 2
    right = window - 1 - left
    padded = np.pad(X, (left, right), mode="edge")
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def worker_count(limit: int = None) -> int:
    """
    Number of worker threads for sweeps, FAIRDYN_THREADS overrides the cpu count.
    """
    env = os.environ.get("FAIRDYN_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 1
    else:
        n = os.cpu_count() or 1
    n = max(1, n)
    if limit is not None:
        n = max(1, min(n, limit))
    return n


def _get_python_files(path: str):
    return sorted(
        os.path.join(dp, f) for dp, dn, filenames in os.walk(path) for f in filenames if os.path.splitext(f)[1] == '.py'
    )


def code_hash(folder: str = None) -> str:
    """
    Returns an md5 hash over the package's .py files, stamped into result summaries so runs can be matched to code.
    """
    folder = default(folder, os.path.dirname(os.path.abspath(__file__)))
    digest = hashlib.md5()
    for file in _get_python_files(folder):
        with open(file, 'rb') as f:
            digest.update(os.path.relpath(file, folder).encode('utf8'))
            digest.update(hashlib.md5(f.read()).hexdigest().encode('utf8'))
    return digest.hexdigest()
