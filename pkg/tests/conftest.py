from __future__ import annotations

import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
ALL_STAGES = ("plan", "search", "select", "evaluate", "analyze", "synthesize", "report")


@pytest.fixture()
def project_dir(tmp_path) -> Path:
    """Fresh writable copy of the committed fixture project."""
    target = tmp_path / "project"
    shutil.copytree(FIXTURES / "project", target)
    return target


def run_stages(project: Path, stages=ALL_STAGES) -> list:
    from slrpipe.cli import run_stage
    from slrpipe.project import load_config

    manifests = []
    for stage in stages:
        manifests.append(run_stage(stage, load_config(project)))
    return manifests


@pytest.fixture(scope="session")
def staged_project(tmp_path_factory) -> Path:
    """Fixture project with all seven stages already run. Treat as read-only;
    tests that mutate state should copy it first (see fresh_staged_project)."""
    target = tmp_path_factory.mktemp("staged") / "project"
    shutil.copytree(FIXTURES / "project", target)
    run_stages(target)
    return target


@pytest.fixture()
def fresh_staged_project(staged_project, tmp_path) -> Path:
    target = tmp_path / "project"
    shutil.copytree(staged_project, target)
    return target
