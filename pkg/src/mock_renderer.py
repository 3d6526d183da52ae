"""
Scripted stand-in for a headless-browser renderer.

    python src/mock_renderer.py <input.html> <output.png>

Writes a small PNG unless the input contains one of the markers below.
"""
import sys
import time

from PIL import Image

FAIL_MARKER = "FAIL_RENDER"
EMPTY_MARKER = "EMPTY_RENDER"
NO_OUTPUT_MARKER = "NO_OUTPUT_RENDER"
GARBAGE_MARKER = "GARBAGE_RENDER"
SLOW_MARKER = "SLOW_RENDER"

IMAGE_SIZE = (16, 16)
SLOW_SECONDS = 30


def main(argv):
    if len(argv) != 3:
        print("usage: mock_renderer.py <input> <output>", file=sys.stderr)
        return 2
    _, input_path, output_path = argv
    with open(input_path, "r", encoding="utf-8") as f:
        page = f.read()

    if FAIL_MARKER in page:
        print("mock renderer: scripted failure", file=sys.stderr)
        return 1
    if SLOW_MARKER in page:
        time.sleep(SLOW_SECONDS)
    if NO_OUTPUT_MARKER in page:
        return 0
    if EMPTY_MARKER in page:
        with open(output_path, "wb") as f:
            f.write(b"\x00")
        return 0
    if GARBAGE_MARKER in page:
        with open(output_path, "wb") as f:
            f.write(b"not an image at all")
        return 0

    Image.new("RGB", IMAGE_SIZE, (255, 255, 255)).save(output_path, format="PNG")
    print(f"mock renderer: wrote {output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
