from __future__ import annotations

import enum


class Algorithm(str, enum.Enum):
    mu = "mu"
    mu_rp = "mu-rp"
    hals = "hals"
    hals_rp = "hals-rp"
    fasthals = "fasthals"
    fasthals_rp = "fasthals-rp"

    @property
    def is_projected(self) -> bool:
        return self.value.endswith("-rp")

    @property
    def label(self) -> str:
        labels = {
            "mu": "MU",
            "mu-rp": "MU-RP",
            "hals": "HALS",
            "hals-rp": "HALS-RP",
            "fasthals": "FastHALS",
            "fasthals-rp": "FastHALS-RP",
        }
        return labels[self.value]

    @property
    def normalizes_by_default(self) -> bool:
        return self in (Algorithm.fasthals, Algorithm.fasthals_rp)


class RunStatus(str, enum.Enum):
    completed = "completed"
    failed = "failed"
    diverged = "diverged"
    invalid = "invalid"


class DatasetFormat(str, enum.Enum):
    csv = "csv"
    mm = "mm"
    pgm_dir = "pgm-dir"
    corpus = "corpus"
    synthetic = "synthetic"


class DatasetKind(str, enum.Enum):
    dense = "dense"
    sparse = "sparse"
    synthetic = "synthetic"


class ProjectorSide(str, enum.Enum):
    left = "left"
    right = "right"
