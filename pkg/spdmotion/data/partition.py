import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from fvcore.common.file_io import PathManager
from fvcore.common.registry import Registry

from .skeleton import JointLayout

__all__ = [
    "PartitionScheme",
    "PARTITION_REGISTRY",
    "SKELETON_EDGES",
    "hand_partition",
    "body_partition",
    "build_partition",
    "load_partition_file",
    "partition_frames",
]

PARTITION_REGISTRY = Registry("PARTITION")
PARTITION_REGISTRY.__doc__ = """
Registry for built-in joint partitions, keyed by layout convention name.

The registered object is called with `obj(layout)` and returns a `PartitionScheme`.
"""


@dataclass(frozen=True)
class PartitionScheme:
    """
    Ordered list of ordered joint-index lists, one per body/hand part.
    """

    parts: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        parts = tuple(tuple(int(i) for i in part) for part in self.parts)
        if len(parts) == 0:
            raise ValueError("a partition scheme needs at least one part")
        for k, part in enumerate(parts):
            if len(part) == 0:
                raise ValueError("part {} is empty".format(k))
            if min(part) < 0:
                raise ValueError("part {} has a negative joint index".format(k))
        object.__setattr__(self, "parts", parts)

    def __len__(self):
        return len(self.parts)

    def validate(self, joint_count: int) -> None:
        for k, part in enumerate(self.parts):
            if max(part) >= joint_count:
                raise ValueError(
                    "part {} references joint {} but the layout has {} joints".format(
                        k, max(part), joint_count
                    )
                )

    def joints(self) -> List[int]:
        return sorted({j for part in self.parts for j in part})

    def to_json(self) -> str:
        return json.dumps([list(p) for p in self.parts])

    @classmethod
    def from_json(cls, text: str) -> "PartitionScheme":
        data = json.loads(text)
        if not isinstance(data, list) or not all(isinstance(p, list) for p in data):
            raise ValueError("a partition must be a JSON list of index lists")
        return cls(tuple(tuple(p) for p in data))


def load_partition_file(path: str) -> PartitionScheme:
    with PathManager.open(path, "r") as f:
        return PartitionScheme.from_json(f.read())


_HAND_CONVENTIONS = ("hand22",)

# hand22: 0 wrist, 1 palm, then base/first/second/tip for thumb, index, middle, ring, pinky.
_HAND22_FINGERS = {
    "thumb": (2, 3, 4, 5),
    "index": (6, 7, 8, 9),
    "middle": (10, 11, 12, 13),
    "ring": (14, 15, 16, 17),
    "pinky": (18, 19, 20, 21),
}

# Chains ordered head-down (upper parts) and spine-down (lower parts).
_BODY_CHAINS = {
    # Kinect v2
    "body25": {
        "upper_right": (3, 2, 20, 8, 9, 10, 11),
        "upper_left": (3, 2, 20, 4, 5, 6, 7),
        "lower_right": (20, 1, 0, 16, 17, 18, 19),
        "lower_left": (20, 1, 0, 12, 13, 14, 15),
    },
    # Perception Neuron style mocap skeleton
    "body21": {
        "upper_right": (12, 11, 10, 13, 14, 15, 16),
        "upper_left": (12, 11, 10, 17, 18, 19, 20),
        "lower_right": (10, 9, 8, 7, 0, 1, 2, 3),
        "lower_left": (10, 9, 8, 7, 0, 4, 5, 6),
    },
}


def _chain_edges(*chains: Sequence[int]) -> List[Tuple[int, int]]:
    return [(c[k], c[k + 1]) for c in chains for k in range(len(c) - 1)]


SKELETON_EDGES: Dict[str, List[Tuple[int, int]]] = {
    "hand22": [(0, 1)] + _chain_edges(*[(1,) + f for f in _HAND22_FINGERS.values()]),
    "body25": _chain_edges(
        (3, 2, 20, 1, 0),
        (20, 4, 5, 6, 7, 21),
        (6, 22),
        (20, 8, 9, 10, 11, 23),
        (10, 24),
        (0, 12, 13, 14, 15),
        (0, 16, 17, 18, 19),
    ),
    "body21": _chain_edges(
        (12, 11, 10, 9, 8, 7, 0),
        (0, 1, 2, 3),
        (0, 4, 5, 6),
        (10, 13, 14, 15, 16),
        (10, 17, 18, 19, 20),
    ),
}


@PARTITION_REGISTRY.register()
def hand22(layout: JointLayout) -> PartitionScheme:
    # the thumb part carries the wrist; the other fingers hang off the palm
    parts = [(0, 1) + _HAND22_FINGERS["thumb"]]
    parts += [(1,) + _HAND22_FINGERS[f] for f in ("index", "middle", "ring", "pinky")]
    return PartitionScheme(tuple(parts))


def _body_chains(name: str) -> PartitionScheme:
    chains = _BODY_CHAINS[name]
    return PartitionScheme(
        tuple(chains[k] for k in ("upper_right", "upper_left", "lower_right", "lower_left"))
    )


@PARTITION_REGISTRY.register()
def body25(layout: JointLayout) -> PartitionScheme:
    return _body_chains("body25")


@PARTITION_REGISTRY.register()
def body21(layout: JointLayout) -> PartitionScheme:
    return _body_chains("body21")


def hand_partition(layout: JointLayout) -> PartitionScheme:
    """
    Five parts, one per finger.
    """
    if layout.kind != "hand" or layout.name not in _HAND_CONVENTIONS:
        raise ValueError(
            "layout '{}' ({}) has no finger annotation; supply a custom partition".format(
                layout.name, layout.kind
            )
        )
    if layout.joint_count < 22:
        raise ValueError(
            "hand convention needs 22 joints, layout has {}".format(layout.joint_count)
        )
    return PARTITION_REGISTRY.get(layout.name)(layout)


def body_partition(layout: JointLayout) -> PartitionScheme:
    """
    Four chains: head to right palm, head to left palm, spine to right foot,
    spine to left foot.
    """
    if layout.kind != "body" or layout.name not in _BODY_CHAINS:
        raise ValueError(
            "layout '{}' ({}) has no body chain convention; supply a custom partition".format(
                layout.name, layout.kind
            )
        )
    required = max(max(c) for c in _BODY_CHAINS[layout.name].values()) + 1
    if layout.joint_count < required:
        raise ValueError(
            "body convention '{}' needs {} joints, layout has {}".format(
                layout.name, required, layout.joint_count
            )
        )
    return PARTITION_REGISTRY.get(layout.name)(layout)


def build_partition(layout: JointLayout, partition_file: str = "") -> PartitionScheme:
    """
    Partition for a layout: a custom scheme from ``partition_file`` when given,
    otherwise the built-in convention for the layout.
    """
    if partition_file:
        scheme = load_partition_file(partition_file)
    elif layout.kind == "hand":
        scheme = hand_partition(layout)
    elif layout.kind == "body":
        scheme = body_partition(layout)
    else:
        raise ValueError(
            "custom layout '{}' requires INPUT.PARTITION_FILE".format(layout.name)
        )
    scheme.validate(layout.joint_count)
    return scheme


def partition_frames(frames, scheme: PartitionScheme) -> List:
    """
    Matrix representation of each part: for frames of shape (..., J, 3) (numpy
    or torch), returns one (..., m_p, 3) array per part, rows in the part's
    joint order.
    """
    scheme.validate(frames.shape[-2])
    return [frames[..., list(part), :] for part in scheme.parts]
