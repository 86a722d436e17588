#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Build data/corpus.txt from standard-library docstrings.

Modules are visited in sorted order and each docstring is written once, so
the same Python version always produces the same bytes.
"""

import argparse
import importlib
import inspect
import pkgutil
import sys
import warnings

SKIP_PREFIXES = ("test", "idlelib", "tkinter", "turtle", "lib2to3", "ensurepip", "this", "antigravity", "__")


def modules():
    names = set(sys.builtin_module_names)
    for info in pkgutil.iter_modules():
        names.add(info.name)
    for name in sorted(names):
        if name.startswith(SKIP_PREFIXES):
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                module = importlib.import_module(name)
        except Exception:
            continue
        if not getattr(module, "__file__", "") or "site-packages" in module.__file__ or "dist-packages" in module.__file__:
            if name not in sys.builtin_module_names:
                continue
        yield name, module


def docstrings(module):
    seen = set()
    doc = inspect.getdoc(module)
    if doc:
        yield doc
    for _, member in sorted(vars(module).items()):
        if getattr(member, "__module__", None) != module.__name__:
            continue
        if not (inspect.isclass(member) or inspect.isroutine(member)):
            continue
        for obj in [member] + ([m for _, m in sorted(vars(member).items())] if inspect.isclass(member) else []):
            doc = inspect.getdoc(obj) if callable(obj) or inspect.isclass(obj) else None
            if doc and id(obj) not in seen:
                seen.add(id(obj))
                yield doc


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/corpus.txt")
    parser.add_argument("--bytes", type=int, default=1_200_000, help="stop after this many bytes")
    args = parser.parse_args()

    written, seen = 0, set()
    with open(args.out, "w", encoding="ascii", errors="ignore", newline="\n") as out:
        for _, module in modules():
            for doc in docstrings(module):
                text = doc.encode("ascii", "ignore").decode("ascii").strip()
                if len(text) < 80 or text in seen:
                    continue
                seen.add(text)
                out.write(text + "\n\n")
                written += len(text) + 2
                if written >= args.bytes:
                    return


if __name__ == "__main__":
    main()
