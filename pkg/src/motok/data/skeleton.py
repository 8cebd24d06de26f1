"""Stick-figure skeleton, forward kinematics and feature extraction."""

from dataclasses import dataclass

import numpy as np

from .layout import PoseFeatureLayout

CONTACT_VELOCITY = 1e-2
CONTACT_HEIGHT = 0.05


@dataclass(frozen=True)
class Skeleton:
    names: tuple
    parents: tuple
    offsets: np.ndarray  # (J, 3) rest offsets from parent; root row unused
    mirror_pairs: tuple
    feet: tuple  # (left foot joint, right foot joint)

    @property
    def n_joints(self):
        return len(self.names)

    def layout(self):
        return PoseFeatureLayout(self.n_joints, self.mirror_pairs)


def stick_figure():
    """Eight-joint figure: root, head, two two-joint arms, two one-joint legs.

    +x is the figure's left, +y up, +z forward.
    """
    names = ("root", "head", "l_elbow", "l_hand", "r_elbow", "r_hand", "l_foot", "r_foot")
    parents = (-1, 0, 0, 2, 0, 4, 0, 0)
    offsets = np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.6, 0.0],
        [0.25, 0.35, 0.0],
        [0.0, -0.3, 0.0],
        [-0.25, 0.35, 0.0],
        [0.0, -0.3, 0.0],
        [0.12, -0.95, 0.0],
        [-0.12, -0.95, 0.0],
    ])
    return Skeleton(names, parents, offsets, ((2, 4), (3, 5), (6, 7)), (6, 7))


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 1, 1] = 1.0
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 2, 2] = 1.0
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def forward_kinematics(skeleton, root_pos, yaw, flex, abduct):
    """Global joint positions and local rotations.

    root_pos (F, 3), yaw (F,), flex/abduct (F, J) angles about x and z.
    Returns positions (F, J, 3) and local rotations (F, J, 3, 3).
    """
    n_frames, j = flex.shape
    local = rot_z(abduct) @ rot_x(flex)
    glob = np.zeros((n_frames, j, 3, 3))
    pos = np.zeros((n_frames, j, 3))
    glob[:, 0] = rot_y(yaw)
    pos[:, 0] = root_pos
    for k in range(1, j):
        p = skeleton.parents[k]
        glob[:, k] = glob[:, p] @ local[:, k]
        pos[:, k] = pos[:, p] + np.einsum("fij,j->fi", glob[:, k], skeleton.offsets[k])
    return pos, local


def pose_features(skeleton, root_pos, yaw, flex, abduct):
    """Render ``F`` animation frames into ``F - 1`` feature rows."""
    pos, local = forward_kinematics(skeleton, root_pos, yaw, flex, abduct)
    j = skeleton.n_joints
    n = pos.shape[0] - 1
    inv_yaw = rot_y(-yaw[:n])  # world -> root-facing frame

    ang_vel = (yaw[1:] - yaw[:-1])[:, None]
    root_vel = np.einsum("fij,fj->fi", inv_yaw, pos[1:, 0] - pos[:-1, 0])[:, [0, 2]]
    height = pos[:n, 0, 1:2]

    rel = pos[:n, 1:] - pos[:n, :1]
    rel[..., 1] = pos[:n, 1:, 1]
    local_pos = np.einsum("fij,fkj->fki", inv_yaw, rel).reshape(n, 3 * (j - 1))
    vel = np.einsum("fij,fkj->fki", inv_yaw, pos[1:] - pos[:-1]).reshape(n, 3 * j)
    rot6 = np.concatenate([local[:n, 1:, :, 0], local[:n, 1:, :, 1]], axis=-1).reshape(n, 6 * (j - 1))

    contacts = []
    for foot in skeleton.feet:
        vy = np.abs(pos[1:, foot, 1] - pos[:-1, foot, 1])
        contacts.append((vy < CONTACT_VELOCITY).astype(np.float64))
        contacts.append((pos[:n, foot, 1] < CONTACT_HEIGHT).astype(np.float64))
    contacts = np.stack(contacts, axis=1)
    return np.concatenate([ang_vel, root_vel, height, local_pos, vel, rot6, contacts], axis=1)
