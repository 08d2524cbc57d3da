import os
import sys
from pathlib import Path

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import pytest  # noqa: E402

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).resolve().parents[1] / "data" / "canterbury.txt"
VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def text_lm():
    from stegodetect.corpus import sentences_from_text
    from stegodetect.stegogen import train_lm

    return train_lm(sentences_from_text(DATA.read_text(encoding="utf-8")), order=3)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
