"""Candidate constellations and the superconstellation built from them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Coincidence tolerance for points shared between constellations. QPSK sits
# on the odd-angle 8-PSK points only up to rounding.
POINT_TOL = 1e-9

KINDS = ("qpsk", "8psk", "16qam")

_ALIASES = {
    "qpsk": "qpsk",
    "4psk": "qpsk",
    "8psk": "8psk",
    "psk8": "8psk",
    "16qam": "16qam",
    "qam16": "16qam",
}


def canonical_kind(kind: str) -> str:
    """Map a user-facing label ("QPSK", "psk8", ...) to its canonical form."""
    key = str(kind).strip().lower().replace("-", "").replace("_", "")
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValueError(
            f"unsupported constellation {kind!r}; expected one of {', '.join(KINDS)}"
        ) from None


def _sort_points(points: np.ndarray) -> np.ndarray:
    angle = np.round(np.mod(np.angle(points), 2 * np.pi), 12)
    # angle 2*pi after rounding is the same direction as 0
    angle[angle >= np.round(2 * np.pi, 12)] = 0.0
    mag = np.round(np.abs(points), 12)
    order = np.lexsort((mag, angle))
    return points[order]


@dataclass(frozen=True)
class Constellation:
    """A finite unit-average-power symbol alphabet."""

    id: str
    points: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def average_power(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))


def build_constellation(kind: str) -> Constellation:
    """Return the unit-power point set for ``kind``.

    Points are ordered by angle, then magnitude, so sampling indices are
    stable across runs. QPSK uses the odd multiples of pi/4 so that it is a
    subset of 8-PSK.
    """
    kind = canonical_kind(kind)
    if kind == "qpsk":
        pts = np.exp(1j * np.pi / 4 * (2 * np.arange(4) + 1))
    elif kind == "8psk":
        pts = np.exp(1j * np.pi / 4 * np.arange(8))
    else:
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
        grid = (levels[:, None] + 1j * levels[None, :]).ravel()
        pts = grid / np.sqrt(10.0)
    pts = _sort_points(pts.astype(np.complex128))
    pts.setflags(write=False)
    return Constellation(kind, pts)


@dataclass(frozen=True)
class ConstellationSet:
    """Ordered candidate set plus the deduplicated union of its points.

    Attributes
    ----------
    members : tuple of Constellation
    super_points : ndarray of complex
        Union of member points, first occurrence order.
    membership : tuple of frozenset of int
        ``membership[p]`` holds the member indices containing ``super_points[p]``.
    pair_point, pair_label : ndarray of int
        Flattened list of every admissible (point, label) pair. The Gibbs
        symbol update draws over these pairs.
    """

    members: tuple
    super_points: np.ndarray = field(repr=False)
    membership: tuple = field(repr=False)
    pair_point: np.ndarray = field(repr=False)
    pair_label: np.ndarray = field(repr=False)

    @property
    def ids(self) -> tuple:
        return tuple(m.id for m in self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.members], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.members)

    def index(self, kind: str) -> int:
        return self.ids.index(canonical_kind(kind))

    def member_point_indices(self, label: int) -> np.ndarray:
        """Indices into ``super_points`` of the points of member ``label``."""
        return self.pair_point[self.pair_label == label]

    def membership_ids(self, p: int) -> frozenset:
        return frozenset(self.members[a].id for a in self.membership[p])


def build_set(kinds: Iterable[str]) -> ConstellationSet:
    """Build the candidate set and its superconstellation.

    Raises
    ------
    ValueError
        If ``kinds`` is empty or repeats a constellation.
    """
    kinds = [canonical_kind(k) for k in kinds]
    if not kinds:
        raise ValueError("constellation set must not be empty")
    if len(set(kinds)) != len(kinds):
        raise ValueError(f"duplicate constellation in {kinds}")
    members = tuple(build_constellation(k) for k in kinds)

    union: list[complex] = []
    for m in members:
        for p in m.points:
            if not union or np.min(np.abs(np.asarray(union) - p)) > POINT_TOL:
                union.append(complex(p))
    super_points = np.asarray(union, dtype=np.complex128)
    super_points.setflags(write=False)

    membership = []
    for p in super_points:
        owners = frozenset(
            a for a, m in enumerate(members) if np.min(np.abs(m.points - p)) <= POINT_TOL
        )
        membership.append(owners)

    pair_point, pair_label = [], []
    for p, owners in enumerate(membership):
        for a in sorted(owners):
            pair_point.append(p)
            pair_label.append(a)
    pp = np.asarray(pair_point, dtype=np.int64)
    pl = np.asarray(pair_label, dtype=np.int64)
    pp.setflags(write=False)
    pl.setflags(write=False)
    return ConstellationSet(members, super_points, tuple(membership), pp, pl)


def nearest_points(values: Sequence[complex], cset: ConstellationSet) -> np.ndarray:
    """Index of the closest superconstellation point for each value."""
    values = np.asarray(values, dtype=np.complex128)
    return np.argmin(np.abs(values[:, None] - cset.super_points[None, :]), axis=1)
