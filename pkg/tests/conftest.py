from pathlib import Path

import pytest

GOLDEN_DIR = Path(__file__).parent / "golden"

# The worked example used throughout: a branch on a flag with two returns.
FIG1_SOURCE = (
    "int f(bool x)\n"
    "{\n"
    "\tif (x) {\n"
    "\t\treturn 1;\n"
    "\t}\n"
    "\telse {\n"
    "\t\treturn 2;\n"
    "\t}\n"
    "}\n"
)


@pytest.fixture
def fig1_source() -> str:
    return FIG1_SOURCE


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR
