"""Smoke test for the Python bindings.

Run from the repository root:

    cargo build --release -p darkflash-python --features extension-module
    python3 python/smoke_test.py

The script loads target/release/libdarkflash_py.so under the module name
`darkflash` unless a `darkflash` module is already installed (e.g. with
`maturin develop -m crates/python/Cargo.toml`).
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import darkflash

        return darkflash
    except ImportError:
        pass
    for name in ("libdarkflash_py.so", "libdarkflash_py.dylib", "darkflash_py.dll"):
        path = ROOT / "target" / "release" / name
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("darkflash", str(path))
            spec = importlib.util.spec_from_loader("darkflash", loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("darkflash extension not found; build it first (see the docstring)")


CONFIG = {
    "scene": {
        "type": "sphere",
        "radius": 0.15,
        "center": [0, 0, -1.25],
        "bands": [
            {"albedo": [0.6, 0.45, 0.35, 0.7], "specular": 0.1},
            {"albedo": [0.3, 0.5, 0.6, 0.5], "specular": 0.0},
        ],
    },
    "camera": {"fx": 153.6, "fy": 153.6, "cx": 23.5, "cy": 23.5, "width": 48, "height": 48},
    "seed": 3,
}


def main():
    df = load()
    cap = df.Capture.from_config(json.dumps(CONFIG))
    assert cap.shape == (48, 48)
    olats = cap.olats()
    assert len(olats) == 9 and olats[0].shape == (48, 48, 4)

    dim = cap.augment("low-light")
    assert dim.shape == (48, 48, 3)
    assert all(0.0 <= v <= 1.0 for v in dim.to_list())
    assert dim.to_list() == cap.augment("low-light").to_list()

    truth = cap.truth()
    estimate, energy = cap.solve(iterations=300)
    err = estimate.angular_error(truth)
    assert math.isfinite(energy) and math.isfinite(err)

    fused = cap.fuse(estimate)
    assert fused.shape == (48, 48)

    relit = cap.relight(estimate, fused, dim, position=[-0.3, 0.2, 0.0])
    assert sum(relit.to_list()) >= sum(dim.to_list())

    try:
        cap.augment("sunset")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown condition accepted")

    print(f"python smoke test ok: angular error {err:.2f} deg, energy {energy:.4f}, "
          f"fused depth rmse vs truth {fused.rmse(cap.true_depth):.5f} m")


if __name__ == "__main__":
    main()
