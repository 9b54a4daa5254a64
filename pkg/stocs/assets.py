"""
Readers and writers for the point-cloud and SDF asset formats.

Point clouds are whitespace-separated text, one point per line with 2 or 3
coordinates and optionally as many trailing normal components; ``#`` starts a
comment. SDF files start with the header lines ``dim``, ``origin``, ``cellsize``
and ``dims``, followed by the vertex values (x fastest). A header ending with a
``binary`` line is followed by little-endian 64-bit floats instead of text.
"""

from pathlib import Path
import io
import logging

import numpy as np

from .exceptions import AssetFormatError, ConfigurationError
from .geometry import SdfGrid, SurfaceCloud

logger = logging.getLogger(__name__)

SDF_HEADER_KEYS = ("dim", "origin", "cellsize", "dims")


def load_point_cloud(path: str | Path, dim: int | None = None) -> SurfaceCloud:
    path = Path(path)
    try:
        data = np.loadtxt(path, comments="#", ndmin=2, dtype=float)
    except OSError as e:
        raise AssetFormatError(str(path), f"cannot read point cloud ({e})") from e
    except ValueError as e:
        raise AssetFormatError(str(path), f"malformed point cloud ({e})") from e
    if data.shape[0] == 0:
        raise AssetFormatError(str(path), "point cloud is empty")
    columns = data.shape[1]
    layouts = {2: (2, False), 3: (3, False), 4: (2, True), 6: (3, True)}
    if columns not in layouts:
        raise AssetFormatError(str(path), f"expected 2, 3, 4 or 6 columns per line, found {columns}")
    cloud_dim, has_normals = layouts[columns]
    if dim is not None and dim != cloud_dim:
        if dim == 2 and columns == 3:
            raise AssetFormatError(str(path), "three columns are read as a 3D cloud; 2D clouds with normals need four")
        raise AssetFormatError(str(path), f"point cloud is {cloud_dim}D but the scenario is {dim}D")
    points = data[:, :cloud_dim]
    normals = data[:, cloud_dim:] if has_normals else None
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.all(np.isfinite(data), axis=1)))
        raise AssetFormatError(str(path), "non-finite value", line=bad + 1)
    logger.debug("Loaded PointCloud[%s] with %s points.", path, points.shape[0])
    return SurfaceCloud(points=points, normals=normals)


def save_point_cloud(path: str | Path, cloud: SurfaceCloud) -> None:
    data = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    np.savetxt(path, data, fmt="%.9g")


def load_sdf_grid(path: str | Path) -> SdfGrid:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise AssetFormatError(str(path), f"cannot read SDF ({e})") from e

    header: dict[str, list[str]] = {}
    offset = 0
    line_no = 0
    binary = False
    while offset < len(raw):
        end = raw.find(b"\n", offset)
        end = len(raw) if end < 0 else end
        line_no += 1
        line = raw[offset:end].decode("ascii", errors="replace").split("#", 1)[0].strip()
        offset = end + 1
        if not line:
            continue
        key, *rest = line.split()
        if key in header or key not in SDF_HEADER_KEYS:
            raise AssetFormatError(str(path), f"unexpected header entry '{key}'", line=line_no)
        header[key] = rest
        if len(header) == len(SDF_HEADER_KEYS):
            break
    missing = [k for k in SDF_HEADER_KEYS if k not in header]
    if missing:
        raise AssetFormatError(str(path), f"missing header entries: {', '.join(missing)}")

    # Optional binary marker right after the header
    cursor = offset
    while cursor < len(raw) and raw[cursor : cursor + 1] in (b"\n", b"\r", b" ", b"\t"):
        cursor += 1
    if raw[cursor : cursor + 6] == b"binary":
        binary = True
        newline = raw.find(b"\n", cursor)
        offset = len(raw) if newline < 0 else newline + 1

    try:
        dim = int(header["dim"][0])
        origin = [float(v) for v in header["origin"]]
        cellsize = float(header["cellsize"][0])
        dims = tuple(int(v) for v in header["dims"])
    except (ValueError, IndexError) as e:
        raise AssetFormatError(str(path), f"malformed header ({e})") from e
    if len(origin) != dim or len(dims) != dim:
        raise AssetFormatError(str(path), f"header declares dim {dim} but origin/dims have {len(origin)}/{len(dims)} entries")

    if binary:
        body = raw[offset:]
        if len(body) % 8:
            raise AssetFormatError(str(path), f"binary payload of {len(body)} bytes is not a whole number of float64 values")
        values = np.frombuffer(body, dtype="<f8").astype(float)
    else:
        try:
            values = np.loadtxt(io.StringIO(raw[offset:].decode("ascii")), comments="#", dtype=float).reshape(-1)
        except ValueError as e:
            raise AssetFormatError(str(path), f"malformed SDF values ({e})") from e
    try:
        grid = SdfGrid(origin=np.asarray(origin), cell_size=cellsize, dims=dims, values=values)
    except ConfigurationError as e:
        raise AssetFormatError(str(path), str(e)) from e
    logger.debug("Loaded SdfGrid[%s] with dims %s.", path, dims)
    return grid


def save_sdf_grid(path: str | Path, grid: SdfGrid, binary: bool = False) -> None:
    lines = [
        f"dim {grid.dim}",
        "origin " + " ".join(repr(float(v)) for v in grid.origin),
        f"cellsize {grid.cell_size!r}",
        "dims " + " ".join(str(n) for n in grid.dims),
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        if binary:
            f.write(b"binary\n")
            f.write(np.asarray(grid.values, dtype="<f8").tobytes())
        else:
            f.write(("\n".join(repr(float(v)) for v in grid.values) + "\n").encode("ascii"))
