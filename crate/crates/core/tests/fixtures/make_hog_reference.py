# Regenerates hog_reference.txt with scikit-image:
#   python3 make_hog_reference.py > hog_reference.txt
import numpy as np
from skimage.feature import hog

H, W = 128, 171
y, x = np.mgrid[0:H, 0:W]
# Integer arithmetic only, so both sides build bit-identical inputs.
img = ((x * x * 3 + y * 7 + x * y) % 97) / 97.0 * 0.5 + 0.5 * ((x // 9 + y // 5) % 2)
img = img.astype(np.float64)
d = hog(img, orientations=9, pixels_per_cell=(16, 16), cells_per_block=(2, 2),
        block_norm="L2-Hys", feature_vector=True)
for v in d:
    print(repr(float(v)))
