"""Walk four rollouts through both composite rewards and print the anatomy.

The distance reward needs no segmenter. The segmenter-in-the-loop reward
additionally prompts a (stub) segmenter with the predicted box and keypoints
and scores the resulting mask's IoU against ground truth.
"""

import json

import numpy as np

from segreward import (
    BinaryMask,
    Box,
    CoordSpace,
    GroundTruth,
    Point2,
    RewardConfig,
    SceneObject,
    StubSegmenter,
    SyntheticScene,
    score_group,
)


def rect(space, x1, y1, x2, y2):
    arr = np.zeros((space.height, space.width), dtype=bool)
    arr[y1:y2, x1:x2] = True
    return BinaryMask(arr)


def main():
    space = CoordSpace(100, 100)
    target = rect(space, 10, 40, 30, 60)
    scene = SyntheticScene(space=space, objects=(SceneObject(target),))

    gt = GroundTruth(
        image=space,
        gt_boxes=(Box(100, 400, 300, 600),),
        gt_masks=(target,),
        gt_points=((Point2(200, 500), Point2(200, 500)),),
    )

    perfect = ("<think>small block on the left, mid height</think><answer>"
               + json.dumps({"instances": [{"bbox": [100, 400, 300, 600],
                                            "points": [[200, 500], [200, 500]]}]})
               + "</answer>")
    near_miss = ("<think>roughly left of center</think><answer>"
                 + json.dumps({"instances": [{"bbox": [140, 430, 360, 650],
                                              "points": [[250, 540], [250, 540]]}]})
                 + "</answer>")
    degenerate = "the box the box the box the box the box the box the box"
    abstain = '<think>nothing matches the query</think><answer>{"no_target": true}</answer>'

    rollouts = [perfect, near_miss, degenerate, abstain]
    names = ["perfect", "near miss", "degenerate repetition", "false abstention"]
    cfg = RewardConfig()

    print("=== distance-based reward (no segmenter) ===")
    for name, b in zip(names, score_group(rollouts, gt, cfg, "distance")):
        parts = ", ".join(f"{k}={v:+.2f}" for k, v in b.components.items() if v != 0.0)
        print(f"{name:>22}: total {b.total:+7.3f}   [{parts or 'all zero'}]")

    print()
    print("=== segmenter-in-the-loop reward (stub segmenter) ===")
    seg = StubSegmenter(scene)
    for name, b in zip(names, score_group(rollouts, gt, cfg, "sam_loop", seg)):
        parts = ", ".join(f"{k}={v:+.2f}" for k, v in b.components.items() if v != 0.0)
        print(f"{name:>22}: total {b.total:+7.3f}   [{parts or 'all zero'}]")

    print()
    print("Note the near miss: its box still overlaps the target, so the stub")
    print("returns the right mask and the mask-IoU term forgives coordinate")
    print("error that the thresholded box test already refused to pay for.")


if __name__ == "__main__":
    main()
