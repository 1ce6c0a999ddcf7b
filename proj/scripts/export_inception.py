#!/usr/bin/env python3
"""Export torchvision Inception-v3 weights into the toolkit's tensor-dir
format (tensors.bin + manifest.json). The resulting directory is what the
`fid --extractor inception_v3_pool3 --weights DIR` option consumes.

Usage:
    python3 scripts/export_inception.py OUT_DIR

Requires torch + torchvision. Prints the SHA-256 pins to use with
--manifest-sha256 / --blob-sha256 when serving the bundle from a URL.
"""

import hashlib
import json
import struct
import sys
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 2:
        print(__doc__)
        return 2
    out_dir = Path(sys.argv[1])
    out_dir.mkdir(parents=True, exist_ok=True)

    import torchvision  # deferred so --help works without torch

    model = torchvision.models.inception_v3(weights="IMAGENET1K_V1", init_weights=False)
    model.eval()

    manifest = {}
    offset = 0
    blob_path = out_dir / "tensors.bin"
    with open(blob_path, "wb") as blob:
        for name, tensor in model.state_dict().items():
            if name.startswith(("fc.", "AuxLogits.")):
                continue  # the feature trunk ends at the 2048-wide pooling
            if name.endswith("num_batches_tracked"):
                continue
            data = tensor.detach().cpu().float().numpy()
            manifest[name] = {
                "shape": list(data.shape),
                "dtype": "f32",
                "offset": offset,
            }
            raw = struct.pack(f"<{data.size}f", *data.reshape(-1).tolist())
            blob.write(raw)
            offset += len(raw)

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    for path in (manifest_path, blob_path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{path.name}: sha256 {digest}")
    print(f"exported {len(manifest)} tensors ({offset / 1e6:.1f} MB) to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
