"""
gnuplot scripts for the CSV outputs. Nothing is rendered here, the scripts are written next to the data.
"""

import os
from typing import Sequence

from .errors import DomainError

KINDS = ("trajectory", "equilibrium", "value_function")

_HEADER = """\
set datafile separator ","
set key outside right
set grid
set terminal pngcairo size 900,600
set output "{png}"
"""


def _quote(s: str) -> str:
    return '"' + str(s).replace('\\', '\\\\').replace('"', '\\"') + '"'


def _trajectory(csv_name, groups):
    if not groups:
        raise DomainError("A trajectory plot needs the group names.")
    lines = ['set title "Mean repayment probability"', 'set xlabel "t"', 'set ylabel "mu"', 'set yrange [0:1]']
    plots = [
        f'{_quote(csv_name)} using 1:(strcol(2) eq {_quote(name)} ? $3 : NaN) skip 1 with lines title {_quote(name)}'
        for name in groups
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    return lines


def _equilibrium(csv_name, groups):
    return [
        'set title "Equilibrium mean under a fixed threshold"',
        'set xlabel "A"',
        'set ylabel "mu_inf"',
        'set xrange [0:1]',
        'set yrange [0:1]',
        f'plot {_quote(csv_name)} using 1:2 skip 1 with lines title "mu_inf"',
    ]


def _value_function(csv_name, groups):
    return [
        'set title "Optimal threshold and value"',
        'set xlabel "mu"',
        'set ylabel "A*"',
        'set y2label "J"',
        'set ytics nomirror',
        'set y2tics',
        f'plot {_quote(csv_name)} using 1:3 skip 1 with lines title "A*" axes x1y1, \\\n'
        f'     {_quote(csv_name)} using 1:2 skip 1 with lines title "J" axes x1y2',
    ]


def write_gnuplot(kind: str, csv_path: str, script_path: str = None, groups: Sequence[str] = None) -> str:
    """
    Writes a gnuplot script plotting csv_path and returns its path.

    :param kind: one of trajectory, equilibrium or value_function.
    :param script_path: defaults to the CSV path with a .gp extension. The script refers to the CSV by its
        file name, so it runs from the folder both files live in.
    :param groups: group names, required for trajectory plots.
    """
    builders = {"trajectory": _trajectory, "equilibrium": _equilibrium, "value_function": _value_function}
    if kind not in builders:
        raise DomainError(f"Unknown plot kind {kind!r}, expected one of {', '.join(KINDS)}.")
    script_path = script_path or os.path.splitext(csv_path)[0] + ".gp"
    csv_name = os.path.basename(csv_path)
    png_name = os.path.splitext(os.path.basename(script_path))[0] + ".png"
    lines = [_HEADER.format(png=png_name).rstrip("\n")] + builders[kind](csv_name, list(groups or []))
    with open(script_path, "wt", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return script_path
