"""The single record holding every pass/fail tolerance."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class Thresholds:
    p_min: float = 0.01
    chi2_p_min: float = 0.001
    ks_max: float = 0.05
    se_mult: float = 3.0
    cdfi_q95_max: float = 25.0
    bootstrap: int = 1000

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Thresholds":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown threshold(s): {sorted(unknown)}")
        return cls(**d)


DEFAULT = Thresholds()
