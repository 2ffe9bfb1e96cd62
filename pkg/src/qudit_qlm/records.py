"""Observable time series shared by all engines, with CSV / NDJSON IO."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1
PROVENANCES = ("exact", "noiseless", "noisy-trajectory", "noisy-kraus")


@dataclass
class ObservableRecord:
    times: np.ndarray
    charges: np.ndarray  # (n_times, L), original frame
    fluxes: np.ndarray  # (n_times, L-1), original frame
    provenance: str
    seed: int | None = None
    n_samples: int | None = None
    charge_err: np.ndarray | None = None
    flux_err: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.charges = np.asarray(self.charges, dtype=float)
        self.fluxes = np.asarray(self.fluxes, dtype=float)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        nt = len(self.times)
        if self.charges.shape[0] != nt or self.fluxes.shape[0] != nt:
            raise ValueError("observable arrays do not match the time grid")
        if self.fluxes.shape[1] != self.charges.shape[1] - 1:
            raise ValueError("need L-1 link fluxes for L sites")

    @property
    def L(self) -> int:
        return self.charges.shape[1]

    def same_grid(self, other: "ObservableRecord", atol: float = 1e-12) -> bool:
        return self.times.shape == other.times.shape and np.allclose(self.times, other.times, atol=atol, rtol=0)

    def derived(self, charges, fluxes, provenance=None, **meta) -> "ObservableRecord":
        m = dict(self.meta)
        m.update(meta)
        return ObservableRecord(self.times.copy(), charges, fluxes, provenance or self.provenance,
                                self.seed, self.n_samples, meta=m)

    # -- serialization -----------------------------------------------------

    def heatmap_csv(self, quantity: str = "charge") -> str:
        data = {"charge": self.charges, "flux": self.fluxes}[quantity]
        prefix = "site" if quantity == "charge" else "link"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"{prefix}{j}" for j in range(data.shape[1])])
        for t, row in zip(self.times, data):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "provenance": self.provenance,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "times": self.times.tolist(),
            "charges": self.charges.tolist(),
            "fluxes": self.fluxes.tolist(),
            "meta": self.meta,
        }
        if self.charge_err is not None:
            d["charge_err"] = np.asarray(self.charge_err).tolist()
        if self.flux_err is not None:
            d["flux_err"] = np.asarray(self.flux_err).tolist()
        return d

    def to_ndjson(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ObservableRecord":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"schema version {d.get('schema_version')} is not {SCHEMA_VERSION}")
        rec = cls(d["times"], d["charges"], d["fluxes"], d["provenance"], d.get("seed"),
                  d.get("n_samples"), meta=d.get("meta", {}))
        if "charge_err" in d:
            rec.charge_err = np.asarray(d["charge_err"])
        if "flux_err" in d:
            rec.flux_err = np.asarray(d["flux_err"])
        return rec

    @classmethod
    def from_ndjson(cls, text: str) -> "ObservableRecord":
        line = text.strip().splitlines()[0]
        return cls.from_dict(json.loads(line))


def _fmt(x: float) -> str:
    # fixed repr so reruns are byte-identical
    return repr(float(np.round(x, 12)) + 0.0)
