"""VerificationReport: aggregation of the three checks and its JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from daecbf.verifier.correctness import CorrectnessVerdict
from daecbf.verifier.feasibility import FeasibilityVerdict

CHECKS = ("correctness", "interior", "boundary")


def _vec(x):
    return None if x is None else [float(v) for v in np.asarray(x).ravel()]


def correctness_entry(v: CorrectnessVerdict, timing: bool = True) -> dict:
    return {
        "verdict": v.verdict,
        "witness_or_counterexample": _vec(v.counterexample if not v.certified else v.argmin),
        "certificate": None,
        "samples": v.samples,
        "wall_time_s": v.wall_time_s if timing else None,
        "min_h": v.min_h,
        "oracle": v.oracle.to_dict(),
    }


def feasibility_entry(v: FeasibilityVerdict, timing: bool = True) -> dict:
    cert = None
    if v.certificate is not None:
        cert = dict(v.certificate.to_dict(), blocks=v.blocks)
    return {
        "verdict": v.verdict,
        "witness_or_counterexample": _vec(v.counterexample if not v.certified else v.worst_x),
        "certificate": cert,
        "samples": v.samples,
        "wall_time_s": v.wall_time_s if timing else None,
        "worst_margin": v.worst_margin,
    }


@dataclass(frozen=True)
class VerificationReport:
    correctness: CorrectnessVerdict | None = None
    interior: FeasibilityVerdict | None = None
    boundary: FeasibilityVerdict | None = None

    def entries(self):
        return {name: getattr(self, name) for name in CHECKS if getattr(self, name) is not None}

    @property
    def certified(self) -> bool:
        return all(v.certified for v in self.entries().values())

    @property
    def samples(self) -> int:
        return sum(v.samples for v in self.entries().values())

    def to_dict(self, timing: bool = True) -> dict:
        out = {}
        for name in CHECKS:
            v = getattr(self, name)
            if v is None:
                out[name] = None
            elif name == "correctness":
                out[name] = correctness_entry(v, timing)
            else:
                out[name] = feasibility_entry(v, timing)
        out["certified"] = self.certified
        out["samples"] = self.samples
        if self.correctness is not None:
            out["oracle_agreement"] = self.correctness.oracle.to_dict()
        return out

    def timings(self) -> dict:
        return {name: v.wall_time_s for name, v in self.entries().items()}

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)
