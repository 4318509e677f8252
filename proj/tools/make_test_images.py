#!/usr/bin/env python3
"""Regenerates the grayscale PGM fixtures under tests/data from scikit-image samples."""
import pathlib

import numpy as np
from PIL import Image
from skimage import data

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"


def luma(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def save(arr, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="L").save(path)


def half(arr):
    h, w = arr.shape[0] // 2 * 2, arr.shape[1] // 2 * 2
    a = arr[:h, :w].astype(np.float64)
    return np.rint((a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]) / 4).astype(np.uint8)


def main():
    train = {
        "chelsea": luma(data.chelsea())[20:276, 100:356],
        "rocket": luma(data.rocket())[100:356, 150:406],
        "coins": luma(data.coins())[20:276, 40:296],
        "brick": half(luma(data.brick())),
        "gravel": half(luma(data.gravel())),
        "moon": luma(data.moon())[128:384, 128:384],
    }
    for name, arr in train.items():
        save(arr, OUT / "train" / f"{name}.pgm")

    test = {
        "camera": luma(data.camera())[60:156, 200:296],
        "astronaut": luma(data.astronaut())[40:136, 160:256],
        "coffee": luma(data.coffee())[100:196, 250:346],
    }
    for name, arr in test.items():
        save(arr, OUT / "test" / f"{name}.pgm")

    save(half(luma(data.camera())), OUT / "camera256.pgm")


if __name__ == "__main__":
    main()
