"""Download the public siftsmall benchmark (10k base vectors, 100 queries,
ground truth) into tests/data/siftsmall for the recall acceptance tests.

Needs outbound network access; without it, those tests fall back to a
SIFT-shaped synthetic instance of the same size.
"""

import sys
import tarfile
import tempfile
import urllib.request
from pathlib import Path

URL = "ftp://ftp.irisa.fr/local/texmex/corpus/siftsmall.tar.gz"
DEST = Path(__file__).resolve().parent.parent / "tests" / "data" / "siftsmall"
FILES = ("siftsmall_base.fvecs", "siftsmall_query.fvecs", "siftsmall_groundtruth.ivecs")


def main() -> int:
    if all((DEST / f).exists() for f in FILES):
        print(f"already present: {DEST}")
        return 0
    DEST.mkdir(parents=True, exist_ok=True)
    print(f"downloading {URL} ...")
    with tempfile.NamedTemporaryFile(suffix=".tar.gz") as tmp:
        urllib.request.urlretrieve(URL, tmp.name)
        with tarfile.open(tmp.name, "r:gz") as tar:
            for member in tar.getmembers():
                name = Path(member.name).name
                if name in FILES:
                    member.name = name
                    tar.extract(member, DEST)
    missing = [f for f in FILES if not (DEST / f).exists()]
    if missing:
        print(f"archive did not contain: {missing}", file=sys.stderr)
        return 1
    print(f"done: {DEST}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
