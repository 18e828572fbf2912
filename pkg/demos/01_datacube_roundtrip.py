"""Datacubes on disk: reshape, serialize, read back, verify bit-exactness."""

import io

import numpy as np

from cvradar import DataCube, MaterialClass, read_cube, reshape_cube, write_cube

rng = np.random.default_rng(0)

# A raw capture arrives as (Rx, Tx, N); the classifier wants (Rx*Tx, N).
rx, tx, n = 4, 4, 32
raw = (rng.standard_normal((rx, tx, n)) + 1j * rng.standard_normal((rx, tx, n))).astype(np.complex64)
matrix = reshape_cube(raw, rx, tx, n)
print(f"raw {raw.shape} -> channel matrix {matrix.shape}")
print(f"channel row for (rx=2, tx=1) is matrix row {2 * tx + 1}:",
      np.array_equal(matrix[2 * tx + 1], raw[2, 1]))

cube = DataCube(rx_count=rx, tx_count=tx, fast_time_len=n, iq=matrix,
                label=MaterialClass.WOOD, distance_mm=700, session_id=2, sample_id=9)

buf = io.BytesIO()
nbytes = write_cube(cube, buf)
print(f"serialized to {nbytes} bytes "
      f"(= 4 magic + 32 header + {rx * tx}*{n}*8 payload)")

buf.seek(0)
restored = read_cube(buf)
print("round trip bit-exact:", restored == cube)
print("metadata:", restored.label.name.lower(), restored.distance_mm, "mm,",
      "session", restored.session_id)
