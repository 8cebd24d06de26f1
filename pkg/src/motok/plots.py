"""Static images of generated motions (needs the optional matplotlib extra)."""

from pathlib import Path

import numpy as np

from .data.layout import PoseFeatureLayout


def root_trajectory(frames):
    """Integrate root angular and planar velocities into a ground-plane path."""
    frames = np.asarray(frames)
    yaw = np.cumsum(frames[:, 0])
    vx, vz = frames[:, 1], frames[:, 2]
    dx = np.cos(yaw) * vx + np.sin(yaw) * vz
    dz = -np.sin(yaw) * vx + np.cos(yaw) * vz
    return np.concatenate([[[0.0, 0.0]], np.stack([np.cumsum(dx), np.cumsum(dz)], 1)])


def plot_generations(records, out_dir, n_joints=8):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blocks = PoseFeatureLayout(n_joints).blocks()
    height = blocks["root_height"]
    local = blocks["local_positions"]
    files = []

    fig, ax = plt.subplots(figsize=(5, 5))
    for r in records:
        path = root_trajectory(r["frames"])
        ax.plot(path[:, 0], path[:, 1], label=f"seed {r['seed']}")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    ax.set_title(records[0]["text"] if records else "")
    ax.legend(fontsize="small")
    files.append(out / "trajectories.png")
    fig.savefig(files[-1], dpi=100)
    plt.close(fig)

    for r in records:
        f = np.asarray(r["frames"])
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        a1.plot(f[:, height.start])
        a1.set_ylabel("root height")
        a2.plot(f[:, local.start + 1:local.stop:3])
        a2.set_ylabel("joint heights")
        a2.set_xlabel("frame")
        fig.suptitle(f"{r['text']} (seed {r['seed']})")
        files.append(out / f"joints_seed{r['seed']}.png")
        fig.savefig(files[-1], dpi=100)
        plt.close(fig)
    return files
