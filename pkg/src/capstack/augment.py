"""Geometric data augmentation: flips and random perspective transforms.

Perspective warps go through a plane homography solved from 4 corner
correspondences, applied by inverse mapping with bilinear interpolation.
Images are H x W x C uint8 numpy arrays throughout; PPM (P6) read/write is
provided for fixtures and preview output.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import FormatError


def flip(img, axis):
    """Exact mirror: 'horizontal' reverses columns, 'vertical' reverses rows."""
    img = np.asarray(img)
    if axis == "horizontal":
        return img[:, ::-1].copy()
    if axis == "vertical":
        return img[::-1, :].copy()
    raise ValueError(f"unknown flip axis {axis!r}")


def solve_homography(src, dst):
    """3x3 homography H (h22 = 1) mapping 4 source (x, y) points onto 4 targets.

    The 8 unknowns come from the linear system of the projective equations;
    the solution is rejected as degenerate unless every source corner
    reprojects onto its target within 1e-6 after perspective division.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError(f"need 4 (x, y) point pairs, got {src.shape} and {dst.shape}")
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u])
        rhs.append(u)
        rows.append([0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v])
        rhs.append(v)
    try:
        h = np.linalg.solve(np.array(rows), np.array(rhs))
    except np.linalg.LinAlgError:
        raise ValueError("degenerate geometry: corner correspondences are singular")
    H = np.append(h, 1.0).reshape(3, 3)
    err = np.abs(apply_homography(H, src) - dst).max()
    if not np.isfinite(err) or err > 1e-6:
        raise ValueError(
            f"degenerate geometry: corner reprojection error {err:.3g} exceeds 1e-6"
        )
    return H


def apply_homography(H, points):
    """Project (x, y) points by H with perspective division."""
    pts = np.asarray(points, dtype=np.float64)
    ones = np.ones((pts.shape[0], 1))
    proj = np.hstack([pts, ones]) @ np.asarray(H).T
    return proj[:, :2] / proj[:, 2:3]


def warp_perspective(img, H, fill=0):
    """Inverse-map warp with bilinear interpolation; out-of-bounds takes fill.

    Output dimensions equal input dimensions.  An identity homography is an
    exact identity on the image (integer sample points interpolate exactly).
    """
    img = np.asarray(img)
    height, width, channels = img.shape
    try:
        Hinv = np.linalg.inv(np.asarray(H, dtype=np.float64))
    except np.linalg.LinAlgError:
        raise ValueError("degenerate geometry: homography is not invertible")
    ys, xs = np.mgrid[0:height, 0:width]
    coords = np.stack([xs.ravel(), ys.ravel(), np.ones(height * width)])
    src = Hinv @ coords
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    valid = (
        np.isfinite(sx) & np.isfinite(sy)
        & (sx >= 0) & (sx <= width - 1)
        & (sy >= 0) & (sy <= height - 1)
    )
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (sx - x0)[:, None]
    fy = (sy - y0)[:, None]
    pix = img.reshape(-1, channels).astype(np.float64)
    top = pix[y0 * width + x0] * (1 - fx) + pix[y0 * width + x1] * fx
    bottom = pix[y1 * width + x0] * (1 - fx) + pix[y1 * width + x1] * fx
    values = top * (1 - fy) + bottom * fy
    values = np.where(valid[:, None], values, float(fill))
    out = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    return out.reshape(height, width, channels)


def random_perspective(img, distortion, rng):
    """Warp by a homography onto a randomly perturbed corner quad.

    Each corner moves inward (toward the image center) by an independent
    uniform draw in [0, distortion * min(H, W) / 2] per axis, which keeps the
    target quad convex.  Exactly 8 draws are consumed regardless of
    distortion, so rng streams stay aligned; distortion 0 is the identity.
    """
    if not 0 <= distortion < 1:
        raise ValueError(f"distortion must be in [0, 1), got {distortion}")
    img = np.asarray(img)
    height, width = img.shape[:2]
    reach = distortion * min(height, width) / 2.0
    shift = rng.uniform(0.0, reach if reach > 0 else 1.0, size=(4, 2))
    if reach == 0:
        return img.copy()
    corners = np.array(
        [[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]],
        dtype=np.float64,
    )
    inward = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.float64)
    H = solve_homography(corners, corners + shift * inward)
    return warp_perspective(img, H, fill=0)


@dataclass
class AugmentConfig:
    p_hflip: float = 0.5
    p_vflip: float = 0.0
    p_perspective: float = 0.5
    distortion: float = 0.3


def augment_pipeline(img, cfg, rng):
    """Apply hflip, vflip, then perspective, each gated by its own draw."""
    gates = rng.uniform(size=3)
    out = np.asarray(img)
    if gates[0] < cfg.p_hflip:
        out = flip(out, "horizontal")
    if gates[1] < cfg.p_vflip:
        out = flip(out, "vertical")
    if gates[2] < cfg.p_perspective:
        out = random_perspective(out, cfg.distortion, rng)
    return out.copy() if out is img else out


def per_image_rng(seed, epoch, image_id):
    """Independent augmentation stream for one image in one epoch."""
    return np.random.default_rng((seed, epoch, zlib.crc32(image_id.encode("utf-8"))))


def write_ppm(img, path):
    """Binary PPM (P6, maxval 255)."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"P6 output needs an H x W x 3 uint8 image, got {img.shape} {img.dtype}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(buf[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a P6 PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-numeric PPM header fields")
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raster = buf[pos : pos + expected]
    if len(raster) != expected:
        raise FormatError(f"{path}: raster truncated ({len(raster)} of {expected} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()
