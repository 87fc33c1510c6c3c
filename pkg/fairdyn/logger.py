import time
import datetime
import csv

import numpy as np

from . import utils


class LogVariable():
    """
    Latest value of a watched quantity, e.g. the residual of a value iteration sweep.
    """

    WIDTH = {"int": 10, "float": 12, "str": 12}
    PRECISION = {"int": 0, "float": 4, "str": None}
    EXPORT_PRECISION = {"int": None, "float": 12, "str": None}

    def __init__(self, name, type="float", display_width=None, display_precision=None, display_priority=0,
                 export_precision="auto"):

        if type not in self.WIDTH:
            raise ValueError(f"Invalid type {type} for log variable.")

        self.name = name
        self.type = type
        self.display_width = utils.default(display_width, max(self.WIDTH[type], len(name) + 1))
        self.display_precision = utils.default(display_precision, self.PRECISION[type])
        self.export_precision = self.EXPORT_PRECISION[type] if export_precision == "auto" else export_precision
        self.display_priority = display_priority
        self._value = None

    def set(self, value):
        if self.type == "int":
            value = int(value)
        elif self.type == "float":
            value = float(value)
        else:
            value = str(value)
        self._value = value

    def __lt__(self, other):
        return (-self.display_priority, self.name) < (-other.display_priority, other.name)

    @property
    def value(self):
        if self._value is None:
            return "" if self.type == "str" else 0
        if self.type == "float":
            return nice_round(self._value, self.export_precision)
        return self._value

    @property
    def display(self):
        value = self.value
        if self.type == "int":
            result = "{:,}".format(value)
        elif self.type == "float":
            result = "{:.{p}g}".format(value, p=self.display_precision)
        else:
            result = value
        return result[:(self.display_width - 1)]


class Logger():
    """
        Leveled console logger.

        Every line is kept in output_log so commands can save it next to their results. Watched variables
        form a table with one row per record_step(), which export_to_csv() writes out.
    """

    DEBUG = 10
    INFO = 20
    IMPORTANT = 25
    WARN = 30
    ERROR = 40
    DISABLED = 50

    LEVEL_NAMES = {DEBUG: "DEBUG", INFO: "INFO", IMPORTANT: "IMPT", WARN: "WARN", ERROR: "ERROR"}

    def __init__(self, print_level=None):
        self.output_log = []
        self.print_level = utils.default(print_level, self.INFO)
        self._vars = {}
        self._history = []

    def get_level(self, level):
        return self.LEVEL_NAMES.get(level, "LEVEL-" + str(level))

    def watch(self, key, value, **kwargs):
        """ Sets the current value of a variable, creating it on first use. NaN floats are skipped. """
        if isinstance(value, float) and np.isnan(value):
            return
        if key not in self._vars:
            if "type" not in kwargs:
                kwargs["type"] = assume_type(value)
            self._vars[key] = LogVariable(key, **kwargs)
        self._vars[key].set(value)

    @property
    def header(self):
        return "".join((var.name.rjust(var.display_width - 1) + " ")[:var.display_width]
                       for var in sorted(self._vars.values()))

    def print_variables(self, include_header=False, level=INFO):
        """ Prints current value of all watched variables."""
        if include_header:
            self.log("-" * len(self.header), level=level)
            self.log(self.header, level=level)
            self.log("-" * len(self.header), level=level)
        self.log("".join(var.display.rjust(var.display_width - 1) + " " for var in sorted(self._vars.values())),
                 level=level)

    def record_step(self):
        """ Appends the current value of every watched variable as one row. """
        self._history.append({var.name: var.value for var in sorted(self._vars.values())})

    @property
    def history(self):
        return list(self._history)

    def log(self, s="", level=INFO):
        s = str(s)
        if level >= self.print_level:
            if level == self.IMPORTANT:
                s = "<white>{}<end>".format(s)
            elif level == self.WARN:
                s = "<yellow>{}<end>".format(s)
            elif level == self.ERROR:
                s = "<red>{}<end>".format(s)
            print(color_format_string(s))
        self.output_log.append((level, time.time(), color_format_string(s, strip_colors=True)))

    def debug(self, s=""):
        self.log(s, level=self.DEBUG)

    def info(self, s=""):
        self.log(s, level=self.INFO)

    def important(self, s=""):
        self.log(s, level=self.IMPORTANT)

    def warn(self, s=""):
        self.log(s, level=self.WARN)

    def error(self, s=""):
        self.log(s, level=self.ERROR)

    def messages(self, min_level=DEBUG):
        """ Returns logged lines at or above min_level, without colors. """
        return [line for level, _, line in self.output_log if level >= min_level]

    def export_to_csv(self, file_name):
        if len(self._history) == 0:
            return
        with open(file_name, 'wt', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=self._history[-1].keys())
            writer.writeheader()
            writer.writerows(self._history)

    def save_log(self, file_name):
        with open(file_name, "w") as f:
            for level, time_code, line in self.output_log:
                level_code = "[" + self.get_level(level) + "]"
                time_str = datetime.datetime.fromtimestamp(time_code)
                f.write("{:<10} {} {}\n".format(level_code, time_str, line))


def assume_type(value):
    """ Returns the type, int, float or str of variable. Should work fine with np variables. """
    if isinstance(value, str):
        return "str"
    if isinstance(value, (bool, int, np.integer)):
        return "int"
    if isinstance(value, (float, np.floating)):
        return "float"
    raise TypeError("Can not infer type {}.".format(type(value)))


def color_format_string(s, strip_colors=False):
    """ Converts color tags into color strings, or removes them."""
    color_table = {
        "<red>": utils.Color.FAIL,
        "<white>": utils.Color.BOLD,
        "<yellow>": utils.Color.WARNING,
        "<end>": utils.Color.ENDC
    }
    for k, v in color_table.items():
        s = s.replace(k, "" if strip_colors else v)
    return s


def nice_round(x, rounding):
    if rounding is None:
        return x
    return round(x, rounding)


# shared default instance, library functions log here unless given their own
log = Logger()
