import os

# the runtime-bounded acceptance checks are specified single-threaded
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import pytest  # noqa: E402

from svctriage import lexicon  # noqa: E402


@pytest.fixture(scope="session")
def lex():
    return lexicon.default_lexicon()
