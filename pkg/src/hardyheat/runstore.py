"""Content-addressed persistence of scenario runs.

Layout under the store root:

    scenarios/<id>.json     the resolved scenario as submitted
    reports/<id>.<suite>.json   one report per (scenario, suite)
    operators/ trajectories/ kernels/   artifact directories for the CLI

where <id> is the first 16 hex digits of the sha256 of the canonical scenario
JSON.  Re-running an identical (scenario, suite) pair returns the stored
report unchanged unless forced.  Reports carry no timestamps, so a rerun with
the same seed and thread count is bit-identical.
"""

from __future__ import annotations

import json
import os

from .errors import ConfigError
from .scenario import Scenario

__all__ = ["RunStore"]

_SUBDIRS = ("scenarios", "reports", "operators", "trajectories", "kernels")


class RunStore:
    def __init__(self, root: str):
        self.root = root
        for sub in _SUBDIRS:
            os.makedirs(os.path.join(root, sub), exist_ok=True)

    def path(self, sub: str, name: str) -> str:
        if sub not in _SUBDIRS:
            raise ConfigError(f"unknown store subdirectory {sub!r}")
        return os.path.join(self.root, sub, name)

    def _report_path(self, scn: Scenario, suite: str) -> str:
        return self.path("reports", f"{scn.run_id()}.{suite}.json")

    def cached_report(self, scn: Scenario, suite: str) -> dict | None:
        p = self._report_path(scn, suite)
        if os.path.exists(p):
            with open(p) as fh:
                return json.load(fh)
        return None

    def save_report(self, scn: Scenario, suite: str, report: dict) -> str:
        spath = self.path("scenarios", f"{scn.run_id()}.json")
        blob = json.dumps(scn.to_dict(), sort_keys=True, indent=2)
        with open(spath, "w") as fh:
            fh.write(blob + "\n")
        rpath = self._report_path(scn, suite)
        with open(rpath, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return rpath

    def run(self, scn: Scenario, suite: str, force: bool = False) -> tuple[dict, bool]:
        """Return (report, from_cache).  Executes the suite only on a miss."""
        if not force:
            cached = self.cached_report(scn, suite)
            if cached is not None:
                return cached, True
        from .suites import run_suite

        report = run_suite(scn, suite)
        self.save_report(scn, suite, report)
        return report, False
