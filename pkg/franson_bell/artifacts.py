"""Write run artifacts into an output directory with minimal changes

Files whose content did not change are left untouched, so rerunning with the
same seed keeps their timestamps. Artifacts of an earlier run that the current
run no longer produces are removed. Files the writer does not manage are never
deleted.

Usage::

    from pathlib import Path
    from franson_bell.artifacts import ArtifactWriter

    writer = ArtifactWriter(Path("out"), ["report.json", "fringe.csv"])
    writer.write_text("{}", Path("out/report.json"))
    writer.remove_stale()

"""

from pathlib import Path
from typing import Iterable, List, Set


def mkdirp(path: Path) -> None:
    """Create a directory and all its parents if they don't exist

    :param path: Path to the directory to create

    """
    path.mkdir(parents=True, exist_ok=True)


class ArtifactWriter:
    """Track which managed artifacts were written during one run"""

    def __init__(self, root: Path, managed: Iterable[str]) -> None:
        self.root = root.absolute()
        self.old_files: Set[Path] = {
            self.root / name for name in managed if (self.root / name).is_file()
        }
        self.new_files: Set[Path] = set()

    def write_bytes(self, new_content: bytes, dest: Path) -> bool:
        """Write content to a file unless it already holds exactly that content

        :param new_content: Content to write
        :param dest: Path to the file to write
        :return: ``True`` if the file was written, ``False`` if content didn't change

        """
        dest = dest.absolute()
        self.new_files.add(dest)
        if dest.is_file():
            self.old_files.discard(dest)
            if dest.read_bytes() == new_content:
                return False
        mkdirp(dest.parent)
        dest.write_bytes(new_content)
        return True

    def write_text(self, new_content: str, dest: Path) -> bool:
        """Write text as UTF-8, see `write_bytes`"""
        return self.write_bytes(new_content.encode("UTF-8"), dest)

    def remove_stale(self) -> List[Path]:
        """Remove managed artifacts left from earlier runs and not written in this one

        :return: The removed paths

        """
        removed = sorted(self.old_files - self.new_files)
        for path in removed:
            path.unlink()
        return removed
