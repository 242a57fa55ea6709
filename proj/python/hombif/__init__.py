"""Exponential dichotomies, Fredholm indices and index bundles for
parametrized difference equations."""

import json

from . import _core
from ._core import (
    CertificationError,
    DomainError,
    HombifError,
    IndeterminateError,
    InputError,
    NumericError,
    autonomous_spectrum,
    is_hyperbolic,
    spectral_projector,
    switched_index,
)

COMMANDS = ("spectrum", "projectors", "index", "class", "certify", "solve", "realize")

__all__ = [
    "COMMANDS",
    "CertificationError",
    "DomainError",
    "HombifError",
    "IndeterminateError",
    "InputError",
    "NumericError",
    "Result",
    "autonomous_spectrum",
    "builtin_scenario",
    "builtin_scenarios",
    "is_hyperbolic",
    "run",
    "spectral_projector",
    "switched_index",
]


class Result:
    """Outcome of one command: exit code, parsed report and CSV tables."""

    def __init__(self, exit_code, report_text, tables):
        self.exit_code = exit_code
        self.report_text = report_text
        self.report = json.loads(report_text)
        self.tables = dict(tables)

    @property
    def results(self):
        return self.report["results"]

    @property
    def ok(self):
        return self.exit_code == 0

    def __repr__(self):
        return f"Result(command={self.report['command']!r}, exit_code={self.exit_code})"


def builtin_scenarios():
    return list(_core.builtin_scenario_names())


def builtin_scenario(name):
    return json.loads(_core.builtin_scenario(name))


def run(command, scenario, seed=None, threads=1):
    """Run a command on a scenario given as a dict, a JSON string or
    "builtin:NAME"."""
    if isinstance(scenario, str) and scenario.startswith("builtin:"):
        text = _core.builtin_scenario(scenario[len("builtin:"):])
    elif isinstance(scenario, str):
        text = scenario
    else:
        text = json.dumps(scenario)
    return Result(*_core.run(command, text, seed, threads))
