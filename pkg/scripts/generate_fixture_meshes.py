"""Write the bundled fixture geometries as Gmsh MSH 2.2 files.

The example configurations in ``fem_parasitics/data/configs`` expect the meshes in
``fem_parasitics/data/meshes``:

python scripts/generate_fixture_meshes.py

Single fixture, written elsewhere:

python scripts/generate_fixture_meshes.py --only wire --out-dir /tmp/meshes
"""

import argparse
import logging
import sys
from pathlib import Path

from fem_parasitics.core.mesh import MeshError
from fem_parasitics.utils.box_mesh import FIXTURES, write_msh

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = Path(__file__).resolve().parent.parent / "fem_parasitics" / "data" / "meshes"


def main():
    parser = argparse.ArgumentParser(description="Generate the structured fixture meshes.")
    parser.add_argument("--out-dir", type=Path, default=DEFAULT_OUT_DIR, help="Directory for the .msh files.")
    parser.add_argument("--only", choices=sorted(FIXTURES), action="append", help="Generate only these fixtures (repeatable).")
    args = parser.parse_args()

    names = args.only or sorted(FIXTURES)
    for name in names:
        try:
            mesh = FIXTURES[name]()
        except (MeshError, ValueError) as e:
            logger.error(f"Fixture '{name}' failed: {e}")
            sys.exit(1)
        write_msh(mesh, args.out_dir / f"{name}.msh")


if __name__ == "__main__":
    main()
