"""Derive expected script buckets for hand-built strings from table membership.

Reads crates/core/assets/charsets/*.txt directly and prints one
`("<string>", "<bucket label>"),` line per input, ready to paste into a test.
"""
import json
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/assets/charsets"
ORDER = ["bopomofo", "emoji", "japanese", "korean", "chinese", "english",
         "number", "punctuation", "symbol", "whitespace"]


def load(name):
    ranges = []
    for line in (ROOT / f"{name}.txt").read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        lo, _, hi = line.partition("..")
        ranges.append((int(lo, 16), int(hi or lo, 16)))
    return ranges


TABLES = {n: load(n) for n in ["bopomofo", "emoji", "japanese", "korean", "traditional",
                               "simplified", "english", "number", "punctuation", "symbol",
                               "whitespace"]}


def member(name, c):
    cp = ord(c)
    return any(lo <= cp <= hi for lo, hi in TABLES[name])


def category(c):
    for name in ORDER:
        if name == "chinese":
            t, s = member("traditional", c), member("simplified", c)
            if t and s:
                return "shared"
            if t:
                return "trad"
            if s:
                return "simp"
        elif member(name, c):
            return name
    return "unknown"


ELEMENT = {"english": "English", "emoji": "Emoji", "symbol": "Symbol", "bopomofo": "Bopomofo",
           "japanese": "JP/KR", "korean": "JP/KR", "unknown": "Unknown"}


def bucket(text):
    cats = {category(c) for c in text}
    if not cats:
        return "Empty"
    elements = {ELEMENT[c] for c in cats if c in ELEMENT}
    trad, simp, shared = "trad" in cats, "simp" in cats, "shared" in cats
    if trad and simp:
        return "Other mixed"
    family = "Traditional" if trad else "Simplified" if simp else None
    if family:
        if not elements:
            return f"Only {family}"
        if len(elements) == 1:
            return f"{family} + {elements.pop()}"
        return "Other mixed"
    if shared:
        return "Chinese (undetermined)" if not elements else "Other mixed"
    if len(elements) == 1:
        return f"Only {elements.pop()}"
    if elements:
        return "Other mixed"
    if "punctuation" in cats:
        return "Only Punctuation"
    if "number" in cats:
        return "Only Number"
    return "Only Whitespace"


for s in json.load(sys.stdin):
    print(f"        ({json.dumps(s, ensure_ascii=False)}, {json.dumps(bucket(s))}),")
