"""Author and validate the bundled disentangling scenarios.

Searches joint configurations that put the hook's foot inside the ring's top-left or
top-right corner, for both elbow branches, keeps the ones with the largest clearance,
and derives the test set by nudging one joint of each by +0.05 rad. Every scenario is
re-checked (collision-free, entangled, d < 0.5) before writing.

    python scripts/make_scenarios.py src/arlab/data/scenarios.txt
"""
import math
import sys

import numpy as np

from arlab.envs.disentangle import (
    ArmConfig, Scenario, Shapes, collides, fk, format_scenarios, object_distance, segments_intersect, world_segments,
)

TEST_NUDGE = 0.05


def point_segment_distance(p, a, b):
    """Distances from points p (..., 2) to segments a-b (..., 2); broadcasts."""
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def clearance(arm, shapes, q):
    """Smallest gap between the moving segments and the ring (segments do not cross when valid)."""
    segs = world_segments(arm, shapes, q)
    ring = shapes.ring_segments
    a, b = segs[:, None, 0], segs[:, None, 1]
    c, d = ring[None, :, 0], ring[None, :, 1]
    return float(min(point_segment_distance(a, c, d).min(), point_segment_distance(b, c, d).min(),
                     point_segment_distance(c, a, b).min(), point_segment_distance(d, a, b).min()))


def lift_blocked(shapes, hook, lift=0.4, n=40):
    """True if translating the hook straight up out of the ring would hit the ring."""
    ring = shapes.ring_segments
    for k in range(1, n + 1):
        h = hook + np.array([0.0, lift * k / n])
        segs = np.stack([h[:-1], h[1:]], axis=1)
        if np.any(segments_intersect(segs[:, None, 0], segs[:, None, 1], ring[None, :, 0], ring[None, :, 1])):
            return True
    return False


def ik(arm, wrist, elbow_sign):
    """Joint angles (q1, q2) placing the second joint's end at ``wrist``."""
    l1, l2, _ = arm.link_lengths
    dx, dy = wrist[0] - arm.base[0], wrist[1] - arm.base[1]
    r2 = dx * dx + dy * dy
    c2 = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(c2) > 1:
        return None
    q2 = elbow_sign * math.acos(c2)
    q1 = math.atan2(dy, dx) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return q1, q2


def wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def ring_extent(shapes):
    """Half-size of the ring square and half-width of its top gap."""
    half = float(np.max(np.abs(shapes.ring - shapes.ring_center)))
    gap = float(np.min(np.abs(shapes.ring[[0, -1], 0] - shapes.ring_center[0])))
    return half, gap


def is_entangled(arm, shapes, q):
    _, hook = fk(arm, shapes, q)
    half, _ = ring_extent(shapes)
    inside = np.all(np.abs(hook[2:] - shapes.ring_center) < half)
    return bool(inside and object_distance(arm, shapes, q) < 0.5 and lift_blocked(shapes, hook))


def valid(arm, shapes, q):
    return (
        np.all(np.abs(q) <= arm.joint_limit)
        and not collides(arm, shapes, q)
        and is_entangled(arm, shapes, q)
    )


def search(arm, shapes, corner, elbow, rng, n=20000):
    best = None
    half, gap = ring_extent(shapes)
    for _ in range(n):
        phi = -math.pi / 2 + rng.uniform(-0.7, 0.7)
        tip = shapes.ring_center + np.array([rng.uniform(-0.12, 0.12), rng.uniform(half + 0.01, half + 0.15)])
        wrist = tip - arm.link_lengths[2] * np.array([math.cos(phi), math.sin(phi)])
        sol = ik(arm, wrist, elbow)
        if sol is None:
            continue
        q = np.array([wrap(sol[0]), wrap(sol[1]), wrap(phi - sol[0] - sol[1])])
        if not valid(arm, shapes, q):
            continue
        _, hook = fk(arm, shapes, q)
        if corner == "left" and not hook[4, 0] < shapes.ring_center[0] - gap - 0.02:
            continue
        if corner == "right" and not hook[2, 0] > shapes.ring_center[0] + gap + 0.02:
            continue
        nudged = q.copy()
        nudged[0] += TEST_NUDGE
        if not valid(arm, shapes, nudged):
            continue
        c = min(clearance(arm, shapes, q), clearance(arm, shapes, nudged))
        if best is None or c > best[0]:
            best = (c, q)
    return best


def main(path):
    arm, shapes = ArmConfig(), Shapes()
    rng = np.random.default_rng(20200901)
    train, test = [], []
    for k, (corner, elbow) in enumerate((("left", 1), ("left", -1), ("right", 1), ("right", -1))):
        found = search(arm, shapes, corner, elbow, rng)
        if found is None:
            raise SystemExit(f"no valid configuration for {corner} corner, elbow {elbow:+d}")
        c, q = found
        name = f"{corner}{'_up' if elbow > 0 else '_dn'}"
        train.append(Scenario(name, "train", q))
        nudged = q.copy()
        nudged[k % 3] += TEST_NUDGE
        if not valid(arm, shapes, nudged):
            nudged = q.copy()
            nudged[0] += TEST_NUDGE
        test.append(Scenario(name + "_t", "test", nudged))
        print(f"{name}: clearance {c:.3f}, d = {object_distance(arm, shapes, q):.3f}, q = {np.round(q, 3)}")
    for sc in train + test:
        assert valid(arm, shapes, sc.q), sc.name
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_scenarios(train + test))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "scenarios.txt")
