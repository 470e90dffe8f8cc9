import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phrasecritic.chunker import default_lexicon  # noqa: E402


@pytest.fixture(scope="session")
def lex():
    return default_lexicon()
