"""Shared builders for the test suite."""

from fable.backends import MockGenerationBackend
from fable.decompose import decompose_corpus
from fable.synthesize import synthesize_corpus
from fable.types import Document


def make_docs(n, prefix="d"):
    return [
        Document(
            id=f"{prefix}{i}",
            text=(
                f"Study {i} looks at phenomenon {i}. It uses procedure {i} with "
                f"tool {i}. It finds outcome {i}."
            ),
        )
        for i in range(1, n + 1)
    ]


class RecordingGen:
    """Mock generation backend that keeps every request it served."""

    def __init__(self, seed=0):
        self.inner = MockGenerationBackend(seed=seed)
        self.requests = []

    @property
    def backend_id(self):
        return self.inner.backend_id

    @property
    def stats(self):
        return self.inner.stats

    def generate(self, request):
        self.requests.append(request)
        return self.inner.generate(request)


def build_full_units(docs, schema, templates, backend=None):
    """Stage-1 plus stage-2 units for every document, via the mock backend."""
    backend = backend or MockGenerationBackend(seed=22)
    units = []
    for batch in decompose_corpus(docs, schema, templates, backend):
        units.extend(batch)
    for batch in synthesize_corpus(docs, units, schema, templates, backend):
        units.extend(batch)
    return units
