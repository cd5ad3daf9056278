"""Regenerates the golden expmap fixture with scipy as the rotation oracle.

Outputs:
  golden_expmap.txt     5 frames of root position + 32 rotation vectors
  golden_positions.csv  world position of every joint (frame, joint, x, y, z)
  golden_euler.csv      intrinsic XYZ angles of every joint (frame, joint, a, b, c)
"""
import csv

import numpy as np
from scipy.spatial.transform import Rotation

rng = np.random.default_rng(20)
joints = list(csv.DictReader(open("h36m_joints.csv")))
parents = [int(j["parent"]) for j in joints]
offsets = np.array([[float(j[k]) for k in "xyz"] for j in joints])
n = len(joints)

frames = []
for _ in range(5):
    root = rng.uniform(-500, 500, 3)
    vecs = rng.normal(scale=0.8, size=(n, 3))
    frames.append((root, vecs))

with open("golden_expmap.txt", "w") as f:
    for root, vecs in frames:
        f.write(",".join(repr(float(v)) for v in np.concatenate([root, vecs.ravel()])) + "\n")

with open("golden_positions.csv", "w") as fp, open("golden_euler.csv", "w") as fe:
    fp.write("frame,joint,x,y,z\n")
    fe.write("frame,joint,a,b,c\n")
    for t, (root, vecs) in enumerate(frames):
        local = Rotation.from_rotvec(vecs)
        world = [None] * n
        pos = np.zeros((n, 3))
        for i in range(n):
            p = parents[i]
            if p < 0:
                world[i] = local[i]
                pos[i] = root
            else:
                world[i] = world[p] * local[i]
                pos[i] = pos[p] + world[p].apply(offsets[i])
            fp.write(f"{t},{i},{float(pos[i][0])!r},{float(pos[i][1])!r},{float(pos[i][2])!r}\n")
            e = local[i].as_euler("XYZ")
            fe.write(f"{t},{i},{float(e[0])!r},{float(e[1])!r},{float(e[2])!r}\n")
