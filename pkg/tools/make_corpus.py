"""Regenerate the bundled 256x256 test images from scikit-image sample data.

Run once from the repository root; the outputs are committed, so neither the
package nor its tests need scikit-image at runtime for the corpus itself.
"""

import os

import numpy as np
from skimage import data
from skimage.transform import resize

from diffjpeg.io import write_ppm

SIZE = 256
OUT = os.path.join(os.path.dirname(__file__), "..", "src", "diffjpeg", "data")

NATURAL = {
    "astronaut": data.astronaut,
    "coffee": data.coffee,
    "chelsea": data.chelsea,
    "rocket": data.rocket,
    "ihc": data.immunohistochemistry,
}


def center_square(img):
    h, w = img.shape[:2]
    n = min(h, w)
    top, left = (h - n) // 2, (w - n) // 2
    return img[top : top + n, left : left + n]


def to_ppm_array(img):
    img = center_square(img)
    out = resize(img, (SIZE, SIZE), anti_aliasing=True, preserve_range=True)
    if out.ndim == 2:
        out = np.repeat(out[..., None], 3, axis=2)
    return np.round(out).transpose(2, 0, 1)


def text_image(gray):
    # tile rather than resize so glyph edges stay at native scale
    tiled = np.tile(gray.astype(np.float64), (2, 1))[:SIZE, :SIZE]
    return np.repeat(tiled[None], 3, axis=0)


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, loader in NATURAL.items():
        write_ppm(os.path.join(OUT, f"natural_{name}.ppm"), to_ppm_array(loader()))
    write_ppm(os.path.join(OUT, "text_page.ppm"), text_image(data.page()))
    write_ppm(os.path.join(OUT, "text_sign.ppm"), text_image(data.text()))


if __name__ == "__main__":
    main()
