import io
import sys
from pathlib import Path

import msgspec
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracle module

FIXTURES = Path(__file__).parent.parent / "fixtures"


def records_to_stream(records) -> io.BytesIO:
    return io.BytesIO(b"".join(msgspec.json.encode(r) + b"\n" for r in records))


@pytest.fixture
def store(tmp_path):
    from iolens.store import Store
    return Store(tmp_path / "store")


@pytest.fixture
def fig2a_store(tmp_path):
    """A store with both log-tailing fixtures ingested and resolved."""
    from iolens import pipeline
    from iolens.capture import CaptureSource, open_capture
    from iolens.store import Store
    st = Store(tmp_path / "store")
    for name, fn in (("fig2a", "fluentbit_v1.jsonl"), ("fig2b", "fluentbit_v2.jsonl")):
        src = CaptureSource(session=name, replay_path=str(FIXTURES / fn))
        pipeline.run_replay(open_capture(src), st)
    return st
