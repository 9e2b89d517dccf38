"""Published reference values transcribed for the tests."""

# selected hidden sizes, one entry per (technology, corner) column
PUBLISHED_H = {
    "INV": [14, 16, 18, 16, 18, 20, 20, 24, 22, 26, 20, 20, 20, 26, 24, 20, 20, 20, 26, 20],
    "NAND2": [24, 28, 30, 28, 30, 28, 32, 30, 32, 32, 34, 30, 34, 36, 36, 30, 36, 36, 40, 38],
}
PUBLISHED_DH = sorted({(2, h) for h in PUBLISHED_H["INV"]} | {(4, h) for h in PUBLISHED_H["NAND2"]})

# LUT storage rows: (dims, components, points per dim, bytes per entry) -> bytes
LUT_SIZE_ROWS = [
    ((2, 4, 10, 4), 1_600),
    ((4, 8, 10, 4), 320_000),
    ((6, 12, 10, 4), 48_000_000),
    ((8, 16, 10, 4), 6_400_000_000),
]
