"""Feature space, fault families, and the feature-to-family assignment.

The feature layout is landmark-major then measure kind, with the five local
features occupying the last indices. This ordering is fixed so that serialized
datasets and model containers are bit-stable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable

import numpy as np

from .errors import DataError


class FaultFamily(Enum):
    NOMINAL = "nominal"
    UPLINK_LATENCY = "uplink_latency"
    REMOTE_LATENCY = "remote_latency"
    JITTER = "jitter"
    LOSS = "loss"
    DOWNLOAD_BANDWIDTH = "download_bandwidth"
    LOCAL_LOAD = "local_load"


#: Coarse class order used by every classifier head; index 0 is NOMINAL.
COARSE_FAMILIES: tuple[FaultFamily, ...] = (
    FaultFamily.NOMINAL,
    FaultFamily.UPLINK_LATENCY,
    FaultFamily.REMOTE_LATENCY,
    FaultFamily.JITTER,
    FaultFamily.LOSS,
    FaultFamily.DOWNLOAD_BANDWIDTH,
    FaultFamily.LOCAL_LOAD,
)

NUM_FAMILIES = len(COARSE_FAMILIES)


class MeasureKind(IntEnum):
    """Per-landmark measures, in feature-layout order."""

    DOWNLOAD = 0
    UPLOAD = 1
    RTT = 2
    REORDER_RATIO = 3
    RETRANSMIT_RATIO = 4


KINDS_PER_LANDMARK = len(MeasureKind)

#: Local (landmark-independent) features, in feature-layout order. The gateway
#: round-trip time is deliberately last, at index m-1.
LOCAL_FEATURES: tuple[str, ...] = (
    "mem_total",
    "mem_avail",
    "disk_load",
    "cpu_load",
    "gateway_rtt",
)

NUM_LOCAL_FEATURES = len(LOCAL_FEATURES)

# Manual assignment of each feature to a coarse family. Upload shares the
# download-bandwidth family (only download shaping is injected, and a single
# bandwidth family keeps the score-weighting family sets well-defined).
# Reordering manifests jitter and retransmissions manifest loss under the
# emulated TCP path model.
KIND_FAMILY: dict[MeasureKind, FaultFamily] = {
    MeasureKind.DOWNLOAD: FaultFamily.DOWNLOAD_BANDWIDTH,
    MeasureKind.UPLOAD: FaultFamily.DOWNLOAD_BANDWIDTH,
    MeasureKind.RTT: FaultFamily.REMOTE_LATENCY,
    MeasureKind.REORDER_RATIO: FaultFamily.JITTER,
    MeasureKind.RETRANSMIT_RATIO: FaultFamily.LOSS,
}

LOCAL_FAMILY: dict[str, FaultFamily] = {
    "mem_total": FaultFamily.LOCAL_LOAD,
    "mem_avail": FaultFamily.LOCAL_LOAD,
    "disk_load": FaultFamily.LOCAL_LOAD,
    "cpu_load": FaultFamily.LOCAL_LOAD,
    "gateway_rtt": FaultFamily.UPLINK_LATENCY,
}


@dataclass(frozen=True)
class FeatureSchema:
    """Names, ordering, and family assignment of all m features."""

    landmark_ids: tuple[str, ...]
    local_feature_names: tuple[str, ...] = LOCAL_FEATURES

    def __post_init__(self) -> None:
        if len(set(self.landmark_ids)) != len(self.landmark_ids):
            raise DataError("duplicate landmark ids in schema")
        if self.local_feature_names != LOCAL_FEATURES:
            raise DataError("unsupported local feature list")

    @property
    def num_landmarks(self) -> int:
        return len(self.landmark_ids)

    @property
    def num_features(self) -> int:
        return self.num_landmarks * KINDS_PER_LANDMARK + NUM_LOCAL_FEATURES

    def landmark_index(self, landmark_id: str) -> int:
        try:
            return self.landmark_ids.index(landmark_id)
        except ValueError:
            raise DataError(f"unknown landmark id: {landmark_id!r}") from None

    def feature_index(self, landmark: int, kind: MeasureKind) -> int:
        if not 0 <= landmark < self.num_landmarks:
            raise IndexError(f"landmark index {landmark} out of range")
        return landmark * KINDS_PER_LANDMARK + int(kind)

    def local_feature_index(self, name: str) -> int:
        try:
            offset = self.local_feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown local feature: {name!r}") from None
        return self.num_landmarks * KINDS_PER_LANDMARK + offset

    def decode(self, j: int) -> tuple[int, MeasureKind] | str:
        """Inverse of the layout: (landmark, kind) or the local feature name."""
        if not 0 <= j < self.num_features:
            raise IndexError(f"feature index {j} out of range")
        base = self.num_landmarks * KINDS_PER_LANDMARK
        if j >= base:
            return self.local_feature_names[j - base]
        return j // KINDS_PER_LANDMARK, MeasureKind(j % KINDS_PER_LANDMARK)

    def family_of(self, j: int) -> FaultFamily:
        decoded = self.decode(j)
        if isinstance(decoded, str):
            return LOCAL_FAMILY[decoded]
        return KIND_FAMILY[decoded[1]]

    def feature_families(self) -> list[FaultFamily]:
        return [self.family_of(j) for j in range(self.num_features)]

    def feature_name(self, j: int) -> str:
        """Human-readable feature name, e.g. "landmark:GRAV/rtt" or "local/cpu_load"."""
        decoded = self.decode(j)
        if isinstance(decoded, str):
            return f"local/{decoded}"
        landmark, kind = decoded
        return f"landmark:{self.landmark_ids[landmark].upper()}/{kind.name.lower()}"

    def landmark_of(self, j: int) -> int | None:
        """Landmark index owning feature j, or None for a local feature."""
        decoded = self.decode(j)
        return None if isinstance(decoded, str) else decoded[0]

    def present_features(self, present_landmarks: np.ndarray) -> np.ndarray:
        """Expand a length-l landmark mask to a length-m feature mask (locals always on)."""
        present_landmarks = np.asarray(present_landmarks, dtype=bool)
        if present_landmarks.shape != (self.num_landmarks,):
            raise DataError("present-landmark mask has wrong length")
        mask = np.ones(self.num_features, dtype=bool)
        mask[: self.num_landmarks * KINDS_PER_LANDMARK] = np.repeat(
            present_landmarks, KINDS_PER_LANDMARK
        )
        return mask

    def landmark_feature_set(self, landmarks: Iterable[str]) -> np.ndarray:
        """Boolean feature mask covering all features of the given landmarks."""
        mask = np.zeros(self.num_features, dtype=bool)
        for lid in landmarks:
            lam = self.landmark_index(lid)
            for kind in MeasureKind:
                mask[self.feature_index(lam, kind)] = True
        return mask

    def to_json(self) -> dict:
        return {
            "landmark_ids": list(self.landmark_ids),
            "measure_kinds": [k.name.lower() for k in MeasureKind],
            "local_features": list(self.local_feature_names),
            "family_map": {
                str(j): self.family_of(j).value for j in range(self.num_features)
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureSchema":
        schema = cls(
            landmark_ids=tuple(doc["landmark_ids"]),
            local_feature_names=tuple(doc["local_features"]),
        )
        if doc.get("measure_kinds") != [k.name.lower() for k in MeasureKind]:
            raise DataError("schema measure kinds do not match this package")
        family_map = doc.get("family_map")
        if family_map is not None:
            for j in range(schema.num_features):
                if family_map.get(str(j)) != schema.family_of(j).value:
                    raise DataError(f"schema family map mismatch at feature {j}")
        return schema

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class Sample:
    """One client observation.

    `x` keeps raw measure units: bytes/s for bandwidths, seconds for RTTs,
    dimensionless ratios and loads. Absent landmarks keep their slots in `x`;
    the presence mask governs which ones any consumer may read.
    """

    x: np.ndarray
    present_landmarks: np.ndarray
    service_id: str
    qoe_faulty: bool
    truth_cause: int | None = None
    truth_family: FaultFamily | None = None

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.present_landmarks = np.asarray(self.present_landmarks, dtype=bool)
        if self.x.ndim != 1:
            raise DataError("sample feature vector must be 1-D")
        if (self.truth_cause is not None) != bool(self.qoe_faulty):
            raise DataError("truth_cause must be set exactly for faulty samples")

    def validate(self, schema: FeatureSchema) -> None:
        if self.x.shape != (schema.num_features,):
            raise DataError(
                f"sample has {self.x.shape[0]} features, schema expects {schema.num_features}"
            )
        if self.present_landmarks.shape != (schema.num_landmarks,):
            raise DataError("sample present-landmark mask has wrong length")
        if self.truth_cause is not None:
            family = schema.family_of(self.truth_cause)
            if self.truth_family is not None and family != self.truth_family:
                raise DataError(
                    f"truth family {self.truth_family} does not match cause feature {self.truth_cause}"
                )

    def to_json(self, schema: FeatureSchema | None = None) -> dict:
        doc: dict = {
            "x": [float(v) for v in self.x],
            "present_landmarks": [bool(p) for p in self.present_landmarks],
            "service_id": self.service_id,
            "qoe_faulty": bool(self.qoe_faulty),
            "truth_cause": self.truth_cause,
            "truth_family": None if self.truth_family is None else self.truth_family.value,
        }
        if schema is not None:
            doc["schema_digest"] = schema.digest()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Sample":
        family = doc.get("truth_family")
        return cls(
            x=np.asarray(doc["x"], dtype=np.float64),
            present_landmarks=np.asarray(doc["present_landmarks"], dtype=bool),
            service_id=doc["service_id"],
            qoe_faulty=bool(doc["qoe_faulty"]),
            truth_cause=doc.get("truth_cause"),
            truth_family=None if family is None else FaultFamily(family),
        )


def restrict(sample: Sample, available: Iterable[int], schema: FeatureSchema | None = None) -> Sample:
    """View of `sample` with landmarks outside `available` marked absent.

    `available` holds landmark indices, or landmark ids when `schema` is given.
    Local features are always retained.
    """
    items = list(available)
    if schema is not None and items and isinstance(items[0], str):
        items = [schema.landmark_index(lid) for lid in items]
    mask = np.zeros_like(sample.present_landmarks)
    for lam in items:
        if not 0 <= lam < mask.shape[0]:
            raise DataError(f"landmark index {lam} out of range")
        mask[lam] = True
    return Sample(
        x=sample.x,
        present_landmarks=sample.present_landmarks & mask,
        service_id=sample.service_id,
        qoe_faulty=sample.qoe_faulty,
        truth_cause=sample.truth_cause,
        truth_family=sample.truth_family,
    )
