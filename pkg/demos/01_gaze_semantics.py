"""Where is the pilot looking?

Builds a toy cockpit label map, drops a gaze point on the boundary between
the instrument panel and the window, and shows how the priority weighting
tilts the 121-pixel neighbourhood towards the instruments.
"""

import numpy as np

from aeroload.gaze import (DISK_OFFSETS, SEMANTIC_GROUPS, SemanticFrame, SemanticGroupTable,
                           annotation_weight, disk_pixels, semantic_distribution)

W, H = 60, 40
ids = np.full((H, W), 4, dtype=np.uint8)      # sky
ids[20:, :] = 5                                # ground
ids[28:, 20:40] = 0                            # monitors
ids[34:, :] = 7                                # cockpit interior

table = SemanticGroupTable.identity()
print("per-pixel weights:")
for (name, prio), w in zip(SEMANTIC_GROUPS, annotation_weight(table.priorities)):
    print(f"  {name:10s} priority {prio:2d} -> {w:7.3f}")

frame = SemanticFrame(W, H, ids, gaze_px=(30.0, 29.0))
px = disk_pixels(frame.gaze_px, frame)
print(f"\ngaze at {frame.gaze_px}: {len(px)} of {len(DISK_OFFSETS)} disk pixels in frame")
counts = np.bincount(px, minlength=8)
dist = semantic_distribution(px, table)
for (name, _), c, p in zip(SEMANTIC_GROUPS, counts, dist):
    if c:
        print(f"  {name:10s} {c:3d} pixels ({c / len(px):5.1%}) -> weight share {p:5.1%}")
