import json
from pathlib import Path

import pytest

from hepcluster.model import parse_spec
from hepcluster.simfleet import SimFleet

SPEC_PATH = Path(__file__).resolve().parent.parent / "docs" / "cluster.spec.json"


@pytest.fixture(scope="session")
def paper_spec_text() -> bytes:
    return SPEC_PATH.read_bytes()


@pytest.fixture(scope="session")
def paper_spec(paper_spec_text):
    return parse_spec(paper_spec_text)


@pytest.fixture
def defect_spec_text(paper_spec_text) -> bytes:
    """Topology with node03 reusing node02's address, as published."""
    raw = json.loads(paper_spec_text)
    for node in raw["nodes"]:
        if node["hostname"] == "node03":
            node["interfaces"][0]["ip"] = "10.1.3.195"
    return json.dumps(raw).encode()


@pytest.fixture
def fleet(paper_spec) -> SimFleet:
    return SimFleet(paper_spec)


def converge(spec, fleet):
    """Plan and apply until the diff is empty; returns the last report."""
    from hepcluster import apply, diff, observe
    plan = diff(spec, observe(fleet))
    return apply(plan, fleet, spec)


@pytest.fixture
def converged_fleet(paper_spec, fleet) -> SimFleet:
    report = converge(paper_spec, fleet)
    assert report.status == "converged"
    return fleet
