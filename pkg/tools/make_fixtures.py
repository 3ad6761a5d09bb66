"""Write generated environment fixtures (mazes, caves, rooms) into envs/.

Usage:
    python tools/make_fixtures.py                      # default maze30 / maze50 / cave40 set
    python tools/make_fixtures.py --kind maze --width 50 --height 50 --seed 3 --out envs/maze50_s3.txt
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))
import worldgen  # noqa: E402
from world import parse_world  # noqa: E402

DEFAULT_SET = (
    ("maze30.txt", "maze", 30, 30, 0),
    ("maze50.txt", "maze", 50, 50, 0),
    ("cave40.txt", "cave", 40, 40, 0),
)


def _write(path: str, text: str) -> None:
    world = parse_world(text, name=os.path.splitext(os.path.basename(path))[0])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"  {path}: {world.width}x{world.height}, {len(world.reachable_cells())} reachable cells")


def main() -> None:
    parser = argparse.ArgumentParser(description="Generate environment fixture files")
    parser.add_argument("--kind", choices=worldgen.KINDS, default=None,
                        help="Generator family (default: write the standard set)")
    parser.add_argument("--width", type=int, default=30)
    parser.add_argument("--height", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="Output file (with --kind)")
    parser.add_argument("--dir", default=os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "envs"),
                        help="Output directory for the standard set")
    args = parser.parse_args()

    if args.kind is None:
        print(f"Writing standard fixtures to {os.path.abspath(args.dir)}")
        for name, kind, w, h, seed in DEFAULT_SET:
            _write(os.path.join(args.dir, name), worldgen.generate(kind, w, h, seed))
        return

    if not args.out:
        print("ERROR: --out is required together with --kind", file=sys.stderr)
        sys.exit(1)
    try:
        text = worldgen.generate(args.kind, args.width, args.height, args.seed)
    except ValueError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        sys.exit(1)
    _write(args.out, text)


if __name__ == "__main__":
    main()
