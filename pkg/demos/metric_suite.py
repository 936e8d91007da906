"""The metric suite on a tiny hand-built evaluation.

Shows how cIoU's area weighting diverges from mIoU, the P@tau family,
scoreless box AP, and the no-target accuracy / false-negative split.
"""

from segreward import Box, SampleEvaluation, box_ap, build_report


def main():
    samples = [
        # one large well-segmented object and one small badly-segmented one
        SampleEvaluation("large", intersection=900, union=1000),
        SampleEvaluation("small", intersection=1, union=10),
        # a target the model wrongly abstained on
        SampleEvaluation("missed", intersection=0, union=400, predicted_no_target=True),
        # two no-target queries: one correct abstention, one hallucination
        SampleEvaluation("empty_ok", intersection=0, union=0,
                         is_no_target_gt=True, predicted_no_target=True),
        SampleEvaluation("empty_bad", intersection=0, union=250, is_no_target_gt=True),
    ]

    report = build_report(samples)
    print("target-only mask metrics (no-target samples aggregate separately):")
    print(f"  cIoU = {report.ciou:.4f}   <- area-weighted: the large object dominates")
    print(f"  mIoU = {report.miou:.4f}   <- unweighted: the small failure counts fully")
    for tau, value in sorted(report.p_at.items()):
        print(f"  P@{tau} = {value:.4f}")
    print(f"  no-target accuracy  = {report.no_target_acc:.4f}")
    print(f"  false-negative rate = {report.false_negative_rate:.4f}")

    preds = {"a": [Box(0, 0, 100, 100)], "b": [Box(0, 25, 100, 125)], "c": []}
    gts = {"a": [Box(0, 0, 100, 100)], "b": [Box(0, 0, 100, 100)], "c": [Box(5, 5, 50, 50)]}
    ap, ap50, ap75 = box_ap(preds, gts)
    print("\nscoreless box AP (uniform confidence, precision x recall per threshold):")
    print(f"  AP = {ap:.4f}, AP@0.5 = {ap50:.4f}, AP@0.75 = {ap75:.4f}")
    print("  sample a matches exactly, b overlaps at IoU 0.6, c has no prediction")


if __name__ == "__main__":
    main()
