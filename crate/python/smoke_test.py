"""Smoke test for the pointbim_py extension.

Build first:
    cargo build --release -p pointbim-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib.machinery
import importlib.util
import json
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpointbim_py.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("pointbim_py", str(lib))
            spec = importlib.util.spec_from_file_location("pointbim_py", lib, loader=loader)
            mod = importlib.util.module_from_spec(spec)
            loader.exec_module(mod)
            return mod
    sys.exit("libpointbim_py.so not found; build with --features extension-module")


def main():
    pb = load_module()
    with tempfile.TemporaryDirectory() as tmp:
        xyz = str(pathlib.Path(tmp) / "o.xyz")
        ifc = str(pathlib.Path(tmp) / "o.ifc")
        truth = json.loads(pb.synth_cloud("orthogonal", xyz))
        manifest = json.loads(pb.convert(xyz, ifc, seed=1))
        ok, problems = pb.validate_ifc(ifc)
        stats = json.loads(pb.evaluate(xyz, ifc))
        assert ok, problems
        assert manifest["counts"]["walls"] == len(truth["walls"])
        assert stats["p95"] < 0.01
        assert "[calibration]" in pb.default_config()
        try:
            pb.convert(xyz, ifc, d_min=-1.0)
        except ValueError:
            pass
        else:
            raise AssertionError("negative d_min accepted")
    print(f"pointbim_py {pb.__version__}: ok ({manifest['counts']['elements']} elements, p95 {stats['p95']:.4f} m)")


if __name__ == "__main__":
    main()
