#!/usr/bin/env python3
"""Regenerate the character-set tables under crates/core/assets/charsets/.

Requires: pip install zhon==2.1.1 emoji==2.16.0

Each output file lists one code point (``4E00``) or inclusive range
(``4E00..9FFF``) per line, hex, ascending. Lines starting with ``#`` are
comments. The classifier resolves overlaps by category precedence, so the
files here may overlap freely.
"""
import sys
import unicodedata
from pathlib import Path

import emoji
import importlib.metadata as md
from zhon import cedict

OUT = Path(__file__).resolve().parent.parent / "crates/core/assets/charsets"


def is_han(cp):
    return (
        0x3400 <= cp <= 0x9FFF
        or 0xF900 <= cp <= 0xFAFF
        or 0x20000 <= cp <= 0x3FFFF
    )


def ranges(cps):
    cps = sorted(set(cps))
    out = []
    for cp in cps:
        if out and out[-1][1] + 1 == cp:
            out[-1][1] = cp
        else:
            out.append([cp, cp])
    return out


def write(name, source, cps):
    lines = [f"# {name}", f"# source: {source}"]
    for lo, hi in ranges(cps):
        lines.append(f"{lo:04X}" if lo == hi else f"{lo:04X}..{hi:04X}")
    (OUT / f"{name}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def span(lo, hi):
    return range(lo, hi + 1)


def by_category(prefix):
    return [
        cp
        for cp in range(0x110000)
        if unicodedata.category(chr(cp)).startswith(prefix)
    ]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    zhon_v = md.version("zhon")
    write(
        "traditional",
        f"zhon {zhon_v} cedict.traditional (Han code points only)",
        [ord(c) for c in cedict.traditional if is_han(ord(c))],
    )
    write(
        "simplified",
        f"zhon {zhon_v} cedict.simplified (Han code points only)",
        [ord(c) for c in cedict.simplified if is_han(ord(c))],
    )
    emo = [ord(k) for k in emoji.EMOJI_DATA if len(k) == 1]
    emo += [0x200D, 0xFE0F, 0x20E3, *span(0x1F3FB, 0x1F3FF), *span(0xE0020, 0xE007F)]
    write("emoji", f"emoji {emoji.__version__} single code point entries plus ZWJ/VS16/modifiers", emo)
    write(
        "bopomofo",
        "Unicode Bopomofo, Bopomofo Extended, tone marks",
        [*span(0x3100, 0x312F), *span(0x31A0, 0x31BF), 0x02C7, 0x02C9, 0x02CA, 0x02CB, 0x02D9],
    )
    write(
        "japanese",
        "Hiragana, Katakana (minus U+30FB), Katakana Phonetic Extensions, halfwidth Katakana",
        [*span(0x3040, 0x309F), *[c for c in span(0x30A0, 0x30FF) if c != 0x30FB],
         *span(0x31F0, 0x31FF), *span(0xFF66, 0xFF9F)],
    )
    write(
        "korean",
        "Hangul Jamo, Compatibility Jamo, Jamo Extended-A/B, Syllables, halfwidth Jamo",
        [*span(0x1100, 0x11FF), *span(0x3130, 0x318F), *span(0xA960, 0xA97F),
         *span(0xAC00, 0xD7A3), *span(0xD7B0, 0xD7FF), *span(0xFFA0, 0xFFDC)],
    )
    write("english", "ASCII Latin letters", [*span(0x41, 0x5A), *span(0x61, 0x7A)])
    ucd = f"Unicode {unicodedata.unidata_version} general category"
    write("number", f"{ucd} N*", by_category("N"))
    write("punctuation", f"{ucd} P*", by_category("P"))
    write("symbol", f"{ucd} S*", by_category("S"))
    write(
        "whitespace",
        "Unicode White_Space property",
        [*span(0x09, 0x0D), 0x20, 0x85, 0xA0, 0x1680, *span(0x2000, 0x200A),
         0x2028, 0x2029, 0x202F, 0x205F, 0x3000],
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
