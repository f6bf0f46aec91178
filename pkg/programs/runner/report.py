"""
Run reports, written as YAML.

Floats are emitted with 17 significant digits ('%.16e') so every matrix
reads back to the same doubles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

REPORT_NAME = "report.yaml"


class ReportDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper, value):
    value = float(value)
    if np.isnan(value):
        text = ".nan"
    elif np.isinf(value):
        text = ".inf" if value > 0 else "-.inf"
    else:
        text = "%.16e" % value
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


def _represent_integer(dumper, value):
    return dumper.represent_int(int(value))


def _represent_array(dumper, value):
    return dumper.represent_list(value.tolist())


ReportDumper.add_representer(float, _represent_float)
ReportDumper.add_multi_representer(np.floating, _represent_float)
ReportDumper.add_multi_representer(np.integer, _represent_integer)
ReportDumper.add_multi_representer(np.bool_, lambda dumper, value: dumper.represent_bool(bool(value)))
ReportDumper.add_representer(np.ndarray, _represent_array)


@dataclass(eq=False)
class RunReport:
    """
    Everything a run produced.

    Attributes
    ----------
    mode : str
        solve, learn, simulate or compare.
    seed : int
        Learner seed.
    config : dict
        The scenario mapping, enough to reproduce the run.
    solved : dict
        Model-based P, K1, K2, Pv, M and residuals.
    alignment : dict
        Follower best response under M against the team K2.
    learned : dict
        Learned H, gains, M and their errors to the model-based values.
    costs : dict
        Discounted costs of the simulated rollouts.
    files : dict
        CSV outputs, relative to the output directory.
    wall_clock : float
        Seconds spent in run().
    """

    mode: str
    seed: int
    config: dict
    solved: dict = field(default_factory=dict)
    alignment: dict = field(default_factory=dict)
    learned: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self):
        sections = {"mode": self.mode, "seed": self.seed}
        for name in ("solved", "alignment", "learned", "costs", "files"):
            if getattr(self, name):
                sections[name] = getattr(self, name)
        sections["wall_clock"] = self.wall_clock
        sections["config"] = self.config
        return sections


def dump_report(report):
    """
    Renders a RunReport as YAML, sections in a fixed order.

    Parameters
    ----------
    report : RunReport
        The run's results.

    Returns
    -------
    str
        YAML document, floats written with '%.16e'.
    """
    return yaml.dump(report.to_dict(), Dumper=ReportDumper, sort_keys=False,
                     default_flow_style=None, width=120)


def write_report(report, path):
    """Writes dump_report(report) to path."""
    with open(path, "w") as file:
        file.write(dump_report(report))


def load_report(path):
    """Reads a report back as plain dicts and lists."""
    with open(path) as file:
        return yaml.safe_load(file)
