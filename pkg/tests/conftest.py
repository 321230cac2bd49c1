import os
from pathlib import Path

import pytest

from easytool.providers import ScriptedProvider

GOLDEN = Path(__file__).parent / "golden"

# Places a cl100k_base vocabulary is commonly found without network access.
_VOCAB_CANDIDATES = [
    os.environ.get("EASYTOOL_CL100K_FILE"),
    "/usr/local/lib/python3.10/dist-packages/marimo/_lsp/copilot/cl100k_base.tiktoken",
]


def find_cl100k_vocab():
    for candidate in _VOCAB_CANDIDATES:
        if candidate and Path(candidate).is_file():
            return candidate
    return None


@pytest.fixture(scope="session")
def cl100k():
    pytest.importorskip("tiktoken")
    path = find_cl100k_vocab()
    if path is None:
        pytest.skip("no local cl100k_base vocabulary")
    from easytool.tokens import Cl100kTokenizer

    return Cl100kTokenizer(path)


@pytest.fixture
def golden():
    return GOLDEN


def scripted(*pairs, **rule_options):
    """Provider from ``(substring, response)`` pairs, matched in order."""
    return ScriptedProvider([{"contains": [needle], "response": response, **rule_options} for needle, response in pairs])


# criterion number -> report line, filled in by the acceptance suite
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
