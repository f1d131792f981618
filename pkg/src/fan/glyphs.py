"""Built-in 5x7 dot-matrix glyphs for the 36 caseless character classes."""

import numpy as np

GLYPH_W, GLYPH_H = 5, 7

_ROWS = {
    "a": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "b": ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    "c": [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
    "d": ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."],
    "e": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "f": ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
    "g": [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
    "h": ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "i": [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "j": ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."],
    "k": ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
    "l": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "m": ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
    "n": ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
    "o": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "p": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "q": [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
    "r": ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
    "s": [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
    "t": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    "u": ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "v": ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    "w": ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
    "x": ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
    "y": ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
    "z": ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
    "0": [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    "1": ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "2": [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    "3": ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
    "4": ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    "5": ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    "6": ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    "7": ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    "8": [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    "9": [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
}

GLYPHS = {ch: np.array([[c == "#" for c in row] for row in rows], dtype=bool)
          for ch, rows in _ROWS.items()}


def glyph(ch: str, height: int = GLYPH_H, width: int = GLYPH_W) -> np.ndarray:
    """Nearest-neighbour resample of a glyph to ``height`` x ``width``."""
    g = GLYPHS[ch.lower()]
    rows = np.minimum((np.arange(height) * GLYPH_H) // height, GLYPH_H - 1)
    cols = np.minimum((np.arange(width) * GLYPH_W) // width, GLYPH_W - 1)
    return g[rows][:, cols]
