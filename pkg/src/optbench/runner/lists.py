"""List files and the on-disk registry layout.

A list file names one item per line. Everything from ``#`` to the end of a
line is a comment; blank lines are skipped. Order is kept for display but
carries no meaning.

Layout under the registry root::

    collections/collections.lst
    collections/<coll>/all.lst, default.lst, <tag>.lst
    collections/<coll>/probs/<prob>/...        optional data files
    solvers/solvers.lst
    solvers/<solver>/collections.lst
    solvers/<solver>/<coll>/all.lst, default.lst, [options.json]
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

LIST_SUFFIX = ".lst"


class RegistryError(Exception):
    """A list file is missing, malformed or inconsistent with another one."""


@dataclass(frozen=True)
class ListFile:
    path: Path
    entries: tuple[str, ...]
    comments: tuple[str, ...] = ()

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def parse_list_text(text: str, path: Path | str = "<string>") -> ListFile:
    path = Path(path)
    entries: list[str] = []
    comments: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body, hash_, comment = line.partition("#")
        if hash_:
            comments.append(comment)
        tokens = body.split()
        if not tokens:
            continue
        if len(tokens) > 1:
            raise RegistryError(f"{path}:{lineno}: expected one name per line, got {tokens}")
        name = tokens[0]
        if name in seen:
            raise RegistryError(f"{path}:{lineno}: duplicate entry {name!r}")
        seen.add(name)
        entries.append(name)
    return ListFile(path, tuple(entries), tuple(comments))


def read_list(path: Path | str) -> ListFile:
    path = Path(path)
    if not path.is_file():
        raise RegistryError(f"missing list file {path}")
    return parse_list_text(path.read_text(encoding="utf-8"), path)


def _require_subset(sub: ListFile, sup: ListFile) -> None:
    extra = [name for name in sub if name not in sup]
    if extra:
        raise RegistryError(f"{sub.path} lists {extra} which are absent from {sup.path}")


@dataclass(frozen=True)
class RegistryLayout:
    root: Path
    collections: ListFile
    collection_lists: dict = field(default_factory=dict)  # coll -> {list name -> ListFile}
    solvers: ListFile = None
    solver_collections: dict = field(default_factory=dict)  # solver -> ListFile
    solver_lists: dict = field(default_factory=dict)  # (solver, coll) -> {list name -> ListFile}
    solver_options: dict = field(default_factory=dict)  # (solver, coll) -> dict

    @property
    def solvers_path(self) -> Path:
        return self.root / "solvers" / "solvers.lst"

    def collection_dir(self, coll: str) -> Path:
        return self.root / "collections" / coll

    def problem_data_dir(self, coll: str, prob: str) -> Optional[Path]:
        d = self.collection_dir(coll) / "probs" / prob
        return d if d.is_dir() else None

    def problems(self, coll: str) -> ListFile:
        return self.collection_lists[coll]["all.lst"]

    def solver_list(self, solver: str, coll: str, name: str) -> Optional[ListFile]:
        return self.solver_lists.get((solver, coll), {}).get(name)

    def named_list(self, solver: str, coll: str, name: str) -> Optional[ListFile]:
        """A list referenced in a directive: the solver's own first, then the collection's."""
        return self.solver_list(solver, coll, name) or self.collection_lists.get(coll, {}).get(name)


def _lists_in(directory: Path) -> dict[str, ListFile]:
    return {p.name: read_list(p) for p in sorted(directory.glob(f"*{LIST_SUFFIX}"))}


def load_registry(root: Path | str) -> RegistryLayout:
    """Read every list file under ``root`` and check the subset rules."""
    root = Path(root)
    if not root.is_dir():
        raise RegistryError(f"registry root {root} does not exist")

    collections = read_list(root / "collections" / "collections.lst")
    collection_lists = {}
    for coll in collections:
        cdir = root / "collections" / coll
        lists = _lists_in(cdir) if cdir.is_dir() else {}
        for mandatory in ("all.lst", "default.lst"):
            if mandatory not in lists:
                raise RegistryError(f"missing list file {cdir / mandatory}")
        for name, lf in lists.items():
            if name != "all.lst":
                _require_subset(lf, lists["all.lst"])
        collection_lists[coll] = lists

    solvers = read_list(root / "solvers" / "solvers.lst")
    solver_collections, solver_lists, solver_options = {}, {}, {}
    for solver in solvers:
        sdir = root / "solvers" / solver
        colls = read_list(sdir / "collections.lst")
        _require_subset(colls, collections)
        solver_collections[solver] = colls
        for coll in colls:
            scdir = sdir / coll
            lists = _lists_in(scdir) if scdir.is_dir() else {}
            for mandatory in ("all.lst", "default.lst"):
                if mandatory not in lists:
                    raise RegistryError(f"missing list file {scdir / mandatory}")
            _require_subset(lists["all.lst"], collection_lists[coll]["all.lst"])
            for name, lf in lists.items():
                if name != "all.lst":
                    _require_subset(lf, lists["all.lst"])
            solver_lists[(solver, coll)] = lists
            opt_path = scdir / "options.json"
            if opt_path.is_file():
                try:
                    solver_options[(solver, coll)] = json.loads(opt_path.read_text(encoding="utf-8"))
                except json.JSONDecodeError as exc:
                    raise RegistryError(f"{opt_path}: {exc}") from None

    return RegistryLayout(
        root=root,
        collections=collections,
        collection_lists=collection_lists,
        solvers=solvers,
        solver_collections=solver_collections,
        solver_lists=solver_lists,
        solver_options=solver_options,
    )


def tree_checksum(root: Path | str) -> str:
    """sha256 over relative paths and contents of every file below ``root``."""
    root = Path(root)
    digest = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        rel = p.relative_to(root).as_posix()
        if p.is_dir():
            digest.update(b"D " + rel.encode() + b"\0")
        elif p.is_file():
            digest.update(b"F " + rel.encode() + b"\0")
            digest.update(hashlib.sha256(p.read_bytes()).digest())
    return digest.hexdigest()
