"""Drive the command line tool one stage at a time and compare with a single run.

    python demos/cli_stages.py [out_dir]

Run toy_sway.py first with the same out_dir: it writes toy.png and sway.json.
"""
import sys
from pathlib import Path

from movelike.cli import main as movelike


def run(*argv):
    code = movelike([str(a) for a in argv])
    if code:
        raise SystemExit(f"movelike {argv[0]} exited with {code}")


def main(out_dir="demo_out"):
    out = Path(out_dir)
    photo, driving = out / "toy.png", out / "sway.json"
    run("animate", "--input", photo, "--driving", driving, "--out", out / "direct.gif")
    run("matte", "--input", photo, "--out-dir", out / "matte")
    run("inpaint", "--input", photo, "--matte", out / "matte" / "matte.json", "--out", out / "background.png",
        "--threads", 2)
    run("preview-motion", "--input", photo, "--driving", driving, "--frame", 2,
        "--matte", out / "matte" / "matte.json", "--save-keypoints", out / "keypoints.json",
        "--out", out / "flow.png")
    run("animate", "--input", photo, "--driving", driving, "--matte", out / "matte" / "matte.json",
        "--background", out / "background.png", "--source-keypoints", out / "keypoints.json",
        "--out", out / "staged.gif")
    same = (out / "direct.gif").read_bytes() == (out / "staged.gif").read_bytes()
    print("staged run matches the single run byte for byte:", same, file=sys.stderr)


if __name__ == "__main__":
    main(*sys.argv[1:])
