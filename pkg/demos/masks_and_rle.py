"""Rasterize polygons, round-trip COCO-style RLE, and compare mask IoU."""

import json

from segreward import CoordSpace, Point2, Polygon, distance_to_foreground, mask_iou, rasterize, rle_decode, rle_encode


def show(mask, label):
    print(f"{label} ({mask.width}x{mask.height}, area {mask.area}):")
    for row in mask.array:
        print("   " + "".join("#" if v else "." for v in row))


def main():
    space = CoordSpace(16, 10)

    square = Polygon((2, 2, 8, 2, 8, 8, 2, 8))
    arrow = Polygon((9, 5, 14, 1, 14, 9))
    mask = rasterize([square, arrow], space)
    show(mask, "union of a square and a triangle")

    rle = rle_encode(mask)
    print("\nCOCO-style RLE (column-major, background first):")
    print("  " + json.dumps(rle.to_json()))
    assert rle_decode(rle) == mask
    print("  decode(encode(mask)) == mask  ->  round trip exact")

    square_only = rasterize([square], space)
    print(f"\nIoU(union, square alone) = {mask_iou(mask, square_only):.4f}")
    print(f"IoU(union, union)        = {mask_iou(mask, mask):.4f}")

    p = Point2(0.5, 0.5)
    print(f"\ndistance from image corner to nearest foreground pixel center: "
          f"{distance_to_foreground(mask, p, space):.3f} px")


if __name__ == "__main__":
    main()
