#!/usr/bin/env python3
"""Regenerate src/winophot/data/digits_8x8.csv from scikit-learn.

The bundled dataset is the classic UCI "Optical Recognition of Handwritten
Digits" set as shipped by sklearn.datasets.load_digits: 1797 grayscale 8x8
images, ten classes.  Raw pixel values are integers in [0, 16]; we store them
divided by 16 so every image lies in [0, 1] like a normalized detector input.

scikit-learn is only needed to *regenerate* the file; the package itself never
imports it.
"""

import argparse
import os
import sys

import numpy as np
from sklearn.datasets import load_digits

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from winophot.nn import save_dataset  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    default_out = os.path.join(os.path.dirname(__file__), "..", "src",
                               "winophot", "data", "digits_8x8.csv")
    parser.add_argument("--out", default=os.path.normpath(default_out))
    args = parser.parse_args()

    digits = load_digits()
    images = (digits.images / 16.0).astype(np.float64)[:, None, :, :]
    labels = digits.target.astype(np.int64)
    save_dataset(args.out, images, labels, n_classes=10)
    print(f"wrote {len(labels)} images to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
