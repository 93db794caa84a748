import pytest

from fable.prompts import load_templates
from fable.types import FacetSchema


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture
def schema3():
    return FacetSchema("abstract", ("background", "method", "result"))


@pytest.fixture
def schema2():
    return FacetSchema("duo", ("alpha", "beta"))


@pytest.fixture
def education_schema():
    return FacetSchema("education", ("story", "question", "options"))


@pytest.fixture
def docs3():
    from helpers import make_docs

    return make_docs(3)
