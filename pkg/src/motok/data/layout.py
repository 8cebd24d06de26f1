"""Per-frame pose feature layout.

Channel blocks, in order::

    root angular velocity      1
    root linear velocity       2      (x lateral, z forward; root frame)
    root height                1
    local joint positions      3 * (J - 1)
    joint velocities           3 * J
    6D joint rotations         6 * (J - 1)
    foot contacts              4      (left a, left b, right a, right b)

The lateral axis is x in every 3-vector block.
"""

from dataclasses import dataclass, field

import numpy as np


def channel_count(n_joints):
    j = n_joints
    return 1 + 2 + 1 + 3 * (j - 1) + 3 * j + 6 * (j - 1) + 4


@dataclass(frozen=True)
class PoseFeatureLayout:
    n_joints: int
    mirror_pairs: tuple = field(default=())

    def __post_init__(self):
        if self.n_joints < 2:
            raise ValueError("a skeleton needs at least a root and one joint")

    @property
    def n_channels(self):
        return channel_count(self.n_joints)

    @property
    def n_encoder_channels(self):
        """Channels fed to the motion encoder (contacts excluded)."""
        return self.n_channels - 4

    def blocks(self):
        j = self.n_joints
        sizes = [
            ("root_angular_velocity", 1),
            ("root_linear_velocity", 2),
            ("root_height", 1),
            ("local_positions", 3 * (j - 1)),
            ("velocities", 3 * j),
            ("rotations_6d", 6 * (j - 1)),
            ("foot_contacts", 4),
        ]
        out, start = {}, 0
        for name, size in sizes:
            out[name] = slice(start, start + size)
            start += size
        return out

    def root_scale_mask(self):
        """Boolean mask of root kinematic and contact channels."""
        b = self.blocks()
        mask = np.zeros(self.n_channels, dtype=bool)
        for name in ("root_angular_velocity", "root_linear_velocity", "root_height", "foot_contacts"):
            mask[b[name]] = True
        return mask

    def mirror_permutation(self):
        """Return (permutation, sign) so that ``mirrored = x[:, perm] * sign``."""
        j = self.n_joints
        swap = list(range(j))
        for a, c in self.mirror_pairs:
            swap[a], swap[c] = c, a
        b = self.blocks()
        perm = np.arange(self.n_channels)
        sign = np.ones(self.n_channels)

        sign[b["root_angular_velocity"]] = -1.0
        sign[b["root_linear_velocity"].start] = -1.0  # lateral component

        def vec_block(block, joints, width, lateral_sign):
            start = block.start
            # joints listed in block order; a joint's slot moves with its mirror partner
            slot = {jt: i for i, jt in enumerate(joints)}
            for i, jt in enumerate(joints):
                src = slot[swap[jt]]
                for c in range(width):
                    perm[start + i * width + c] = start + src * width + c
                    sign[start + i * width + c] = lateral_sign[c]

        non_root = list(range(1, j))
        vec_block(b["local_positions"], non_root, 3, (-1.0, 1.0, 1.0))
        vec_block(b["velocities"], list(range(j)), 3, (-1.0, 1.0, 1.0))
        # reflection M R M with M = diag(-1, 1, 1): column 0 -> -M c0, column 1 -> M c1
        vec_block(b["rotations_6d"], non_root, 6, (1.0, -1.0, -1.0, -1.0, 1.0, 1.0))

        fc = b["foot_contacts"].start
        perm[fc:fc + 4] = [fc + 2, fc + 3, fc, fc + 1]
        return perm, sign
