"""Binary PPM (P6) frame writer for environment debugging dumps."""

import numpy as np


def write_ppm(path, frame):
    """Write an RGB frame to a P6 portable pixmap.

    Accepts (3, H, W) or (H, W, 3) float arrays in [0, 1].
    """
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a rank-3 RGB frame, got shape {arr.shape}")
    if arr.shape[0] == 3 and arr.shape[-1] != 3:
        arr = np.moveaxis(arr, 0, -1)
    if arr.shape[-1] != 3:
        raise ValueError(f"no RGB axis in shape {arr.shape}")
    pixels = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
