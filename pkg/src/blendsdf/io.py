"""File formats: PFM float maps, binary PLY meshes, 16-bit PNG images.

PFM stores rows bottom-to-top with a negative scale marking little-endian
data, per the usual convention. PLY is binary little-endian with float32
vertices (+ optional normals) and int32 triangle indices.
"""

import cv2
import numpy as np


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------


def write_pfm(path, data):
    """Write (H, W) or (H, W, 3) float32 data, row 0 at the top."""
    data = np.asarray(data, np.float32)
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"PFM needs (H,W) or (H,W,3), got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale: little-endian
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path):
    """Read a PFM file back to float32 with row 0 at the top."""
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise ValueError(f"not a PFM file: {path}")
        w, h = (int(tok) for tok in f.readline().split())
        scale = float(f.readline())
        count = w * h * (3 if kind == b"PF" else 1)
        raw = np.frombuffer(f.read(count * 4), "<f4" if scale < 0 else ">f4", count)
    data = raw.reshape((h, w, 3) if kind == b"PF" else (h, w))
    if abs(scale) not in (0.0, 1.0):
        data = data * abs(scale)
    return np.ascontiguousarray(data[::-1]).astype(np.float32)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------


def write_ply(path, vertices, faces, normals=None):
    """Binary little-endian PLY with optional per-vertex normals."""
    vertices = np.asarray(vertices, np.float32)
    faces = np.asarray(faces, np.int32)
    lines = [
        b"ply",
        b"format binary_little_endian 1.0",
        f"element vertex {len(vertices)}".encode(),
        b"property float x",
        b"property float y",
        b"property float z",
    ]
    if normals is not None:
        normals = np.asarray(normals, np.float32)
        lines += [b"property float nx", b"property float ny", b"property float nz"]
    lines += [
        f"element face {len(faces)}".encode(),
        b"property list uchar int vertex_indices",
        b"end_header",
    ]
    vert_block = vertices if normals is None else np.concatenate([vertices, normals], axis=1)
    face_block = np.empty((len(faces), 13), np.uint8)
    face_block[:, 0] = 3
    face_block[:, 1:] = faces.astype("<i4").view(np.uint8).reshape(len(faces), 12)
    with open(path, "wb") as f:
        f.write(b"\n".join(lines) + b"\n")
        f.write(np.ascontiguousarray(vert_block.astype("<f4")).tobytes())
        f.write(face_block.tobytes())


def read_ply(path):
    """Read meshes written by write_ply. Returns (vertices, faces, normals|None)."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ValueError(f"not a PLY file: {path}")
        n_vert = n_face = 0
        props = []
        element = None
        while True:
            line = f.readline()
            if not line:
                raise ValueError("PLY header never ended")
            tok = line.split()
            if tok[0] == b"end_header":
                break
            if tok[0] == b"format" and tok[1] != b"binary_little_endian":
                raise ValueError("only binary little-endian PLY is supported")
            if tok[0] == b"element":
                element = tok[1]
                if element == b"vertex":
                    n_vert = int(tok[2])
                elif element == b"face":
                    n_face = int(tok[2])
            if tok[0] == b"property" and element == b"vertex":
                if tok[1] != b"float":
                    raise ValueError("vertex properties must be float")
                props.append(tok[2].decode())
        stride = len(props)
        vert = np.frombuffer(f.read(n_vert * stride * 4), "<f4").reshape(n_vert, stride)
        face_raw = np.frombuffer(f.read(n_face * 13), np.uint8).reshape(n_face, 13)
    if n_face and not np.all(face_raw[:, 0] == 3):
        raise ValueError("only triangle faces are supported")
    faces = face_raw[:, 1:].copy().view("<i4").reshape(n_face, 3).astype(np.int32)
    cols = {name: i for i, name in enumerate(props)}
    verts = vert[:, [cols["x"], cols["y"], cols["z"]]].astype(np.float32)
    normals = None
    if "nx" in cols:
        normals = vert[:, [cols["nx"], cols["ny"], cols["nz"]]].astype(np.float32)
    return verts, faces, normals


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------


def write_png16(path, rgb):
    """Linear [0,1] float RGB -> 16-bit PNG (values clipped)."""
    arr = np.clip(np.asarray(rgb, np.float64), 0.0, 1.0)
    u16 = np.round(arr * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), u16[:, :, ::-1]):
        raise IOError(f"failed to write {path}")


def read_png(path):
    """PNG (8 or 16 bit) -> linear float32 RGB in [0,1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"failed to read {path}")
    if raw.ndim == 3:
        raw = raw[:, :, ::-1]
    peak = 65535.0 if raw.dtype == np.uint16 else 255.0
    return (raw / peak).astype(np.float32)


def write_png8(path, rgb, srgb=True):
    """[0,1] float RGB -> 8-bit PNG, sRGB-encoded unless srgb=False (raw data maps)."""
    arr = np.clip(np.asarray(rgb, np.float64), 0.0, 1.0)
    if srgb:
        arr = np.where(arr <= 0.0031308, 12.92 * arr, 1.055 * arr ** (1 / 2.4) - 0.055)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    if u8.ndim == 3:
        u8 = u8[:, :, ::-1]
    if not cv2.imwrite(str(path), u8):
        raise IOError(f"failed to write {path}")


def write_mask(path, mask):
    """Boolean (H, W) -> 8-bit PNG 0/255."""
    u8 = np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), u8):
        raise IOError(f"failed to write {path}")


def read_mask(path):
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise IOError(f"failed to read {path}")
    return raw >= 128

