"""Residual reports and machine-readable run reports.

Every verification routine returns a ResidualReport: the check name, the
parameter point it ran at, the measured residual (operator norm of LHS - RHS
relative to max(1, |RHS|)), the tolerance, and the pass flag.  A Report
bundles the reports of one suite run together with derived scalars and the
assumption ledger, and serializes losslessly to JSON (and flattened CSV).

Checks marked diagnostic are reported but never affect the overall verdict
or the process exit code.
"""

import csv
import io
import json
from dataclasses import dataclass, field, asdict

SCHEMA_VERSION = 1


def encode_complex(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def decode_complex(obj):
    if isinstance(obj, dict) and set(obj) == {"re", "im"}:
        return complex(obj["re"], obj["im"])
    return obj


def _jsonable(value):
    if isinstance(value, complex):
        return encode_complex(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if hasattr(value, "item"):          # numpy scalars
        value = value.item()
        return _jsonable(value) if isinstance(value, complex) else value
    return value


@dataclass
class ResidualReport:
    name: str
    params: dict
    residual: float
    tolerance: float
    status: str = field(default="")      # pass / fail / error / diagnostic
    diagnostic: bool = False

    def __post_init__(self):
        self.residual = float(self.residual)
        if not self.status:
            if self.diagnostic:
                self.status = "diagnostic"
            else:
                self.status = "pass" if self.residual <= self.tolerance else "fail"

    @property
    def passed(self) -> bool:
        return self.status == "pass" or self.diagnostic

    def as_dict(self) -> dict:
        d = asdict(self)
        d["params"] = _jsonable(d["params"])
        return d


def error_report(name: str, params: dict, message: str) -> ResidualReport:
    rep = ResidualReport(name, dict(params, error=message), float("nan"),
                         float("nan"), status="error")
    return rep


@dataclass
class Report:
    config: dict
    checks: list
    scalars: dict = field(default_factory=dict)
    assumptions: list = field(default_factory=list)

    @property
    def summary(self) -> dict:
        hard = [c for c in self.checks if not c.diagnostic and c.status != "diagnostic"]
        failed = [c.name for c in hard if c.status == "fail"]
        errored = [c.name for c in hard if c.status == "error"]
        return {
            "n_checks": len(self.checks),
            "n_hard": len(hard),
            "failed": failed,
            "errored": errored,
            "pass": not failed and not errored,
        }

    def to_json(self) -> str:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "config": _jsonable(self.config),
            "checks": [c.as_dict() for c in self.checks],
            "scalars": _jsonable(self.scalars),
            "assumptions": list(self.assumptions),
            "summary": self.summary,
        }
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["name", "residual", "tolerance", "status", "params"])
        for c in self.checks:
            writer.writerow([c.name, repr(c.residual), repr(c.tolerance), c.status,
                             json.dumps(_jsonable(c.params), sort_keys=True)])
        return buf.getvalue()

    @property
    def exit_code(self) -> int:
        return 0 if self.summary["pass"] else 1


def report_from_json(text: str) -> Report:
    payload = json.loads(text)
    checks = []
    for c in payload["checks"]:
        checks.append(ResidualReport(
            name=c["name"], params=c["params"], residual=c["residual"],
            tolerance=c["tolerance"], status=c["status"],
            diagnostic=c.get("diagnostic", False)))
    return Report(config=payload["config"], checks=checks,
                  scalars=payload.get("scalars", {}),
                  assumptions=payload.get("assumptions", []))


def emit_report(report: Report, fmt: str, path) -> None:
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    text = report.to_json() if fmt == "json" else report.to_csv()
    with open(path, "w") as fh:
        fh.write(text)
