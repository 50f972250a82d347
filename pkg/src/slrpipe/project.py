"""Project layout, configuration, run manifests and the stage lock.

A project is a directory of plain files (bibliography, corpus/<id>.txt,
rqs.txt, criteria.json, ...). Stage runs never mutate earlier outputs: every
run writes into its own runs/<id>-<stage>/ directory and appends a manifest
line to runs/index.jsonl, so project state only advances through manifested
runs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path


class ConfigError(Exception):
    pass


class PrerequisiteError(Exception):
    """A stage was invoked before the stage that produces its inputs."""

    def __init__(self, message: str, missing_stage: str | None = None):
        super().__init__(message)
        self.missing_stage = missing_stage


class LockHeldError(Exception):
    pass


_INT_KEYS = {"seed", "embedding_window", "embedding_rank", "vault_top_k",
             "min_token_len", "multiword_min_count"}
_FLOAT_KEYS = {"alpha", "vault_sim_threshold", "graph_edge_threshold",
               "multiword_pmi_threshold"}
_LIST_KEYS = {"comparison_properties", "seed_docs", "partition_edges"}
_PATH_KEYS = {"bibliography", "corpus_dir", "rq_file", "criteria_file",
              "synonyms_file", "annotations_dir", "claims_file", "shapes_file",
              "responses_file", "stopwords_file", "resolutions_file"}
_STR_KEYS = {"partition_rq", "partition_facet", "partition_name", "graph_space"}

_DEFAULTS = {
    "corpus_dir": "corpus",
    "rq_file": "rqs.txt",
    "seed": 42,
    "embedding_window": 5,
    "embedding_rank": 50,
    "alpha": 0.0,
    "vault_top_k": 5,
    "vault_sim_threshold": 0.1,
    "graph_edge_threshold": 0.2,
    "graph_space": "tfidf",
    "min_token_len": 2,
    "multiword_pmi_threshold": 3.0,
    "multiword_min_count": 3,
}

# project files picked up automatically when present and not configured
_AUTO_FILES = {
    "criteria_file": "criteria.json",
    "synonyms_file": "synonyms.json",
    "annotations_dir": "annotations",
    "claims_file": "claims.json",
    "shapes_file": "shapes.json",
    "responses_file": "responses.csv",
    "resolutions_file": "resolutions.json",
}


@dataclass
class ProjectConfig:
    root: Path
    values: dict = field(default_factory=dict)

    def path(self, key: str) -> Path | None:
        value = self.values.get(key)
        return self.root / value if value else None

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def bibliography(self) -> tuple[Path, str]:
        value = self.values.get("bibliography")
        if value:
            path = self.root / value
        else:
            for candidate in ("bibliography.bib", "bibliography.json"):
                if (self.root / candidate).exists():
                    path = self.root / candidate
                    break
            else:
                raise PrerequisiteError(
                    "no bibliography found (bibliography.bib or bibliography.json)")
        fmt = "bibtex" if path.suffix == ".bib" else "csl-json"
        return path, fmt

    def config_hash(self) -> str:
        canonical = json.dumps(self.values, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _coerce(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _LIST_KEYS:
        items = [v.strip() for v in raw.split(",") if v.strip()]
        return [float(v) for v in items] if key == "partition_edges" else items
    return raw


def load_config(project_root, config_path=None, seed: int | None = None) -> ProjectConfig:
    """Read the key = value config, apply defaults, and resolve referenced paths."""
    root = Path(project_root).resolve()
    if not root.is_dir():
        raise ConfigError(f"project directory '{project_root}' does not exist")
    path = Path(config_path) if config_path else root / "project.conf"
    values = dict(_DEFAULTS)
    explicit: set[str] = set()
    if path.exists():
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path.name} line {lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _INT_KEYS | _FLOAT_KEYS | _LIST_KEYS | _PATH_KEYS | _STR_KEYS:
                raise ConfigError(f"{path.name} line {lineno}: unknown key '{key}'")
            if not raw:
                continue
            try:
                values[key] = _coerce(key, raw)
                explicit.add(key)
            except ValueError as exc:
                raise ConfigError(f"{path.name} line {lineno}: {exc}") from exc
    elif config_path:
        raise ConfigError(f"config file '{config_path}' does not exist")
    for key, default_name in _AUTO_FILES.items():
        if key not in values and (root / default_name).exists():
            values[key] = default_name
    if seed is not None:
        values["seed"] = seed
    # explicitly configured paths must resolve before any stage starts;
    # absent defaults fall through to per-stage prerequisite checks
    for key in sorted(_PATH_KEYS & explicit):
        target = root / values[key]
        if not target.exists():
            raise ConfigError(f"configured {key} '{values[key]}' does not resolve")
    return ProjectConfig(root=root, values=values)


# ---------------------------------------------------------------------------
# Runs and manifests
# ---------------------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass
class RunManifest:
    run_id: int
    stage: str
    command: str
    config_hash: str
    seed: int
    input_checksums: dict[str, str]
    started: str
    finished: str = ""
    files: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id, "stage": self.stage, "command": self.command,
            "config_hash": self.config_hash, "seed": self.seed,
            "input_checksums": self.input_checksums, "started": self.started,
            "finished": self.finished, "files": self.files,
        }


class RunSpace:
    """Allocates run directories and appends to the run index."""

    def __init__(self, root: Path):
        self.root = root
        self.runs_dir = root / "runs"
        self.index = self.runs_dir / "index.jsonl"

    def next_run_id(self) -> int:
        if not self.index.exists():
            return 1
        last = 0
        for line in self.index.read_text(encoding="utf-8").splitlines():
            if line.strip():
                last = max(last, json.loads(line)["run_id"])
        return last + 1

    def new_run(self, stage: str) -> tuple[int, Path]:
        self.runs_dir.mkdir(exist_ok=True)
        run_id = self.next_run_id()
        run_dir = self.runs_dir / f"{run_id:04d}-{stage}"
        run_dir.mkdir()
        return run_id, run_dir

    def record(self, manifest: RunManifest) -> None:
        with self.index.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest.to_json(), sort_keys=True) + "\n")

    def manifests(self) -> list[dict]:
        if not self.index.exists():
            return []
        return [json.loads(line) for line in self.index.read_text(encoding="utf-8").splitlines()
                if line.strip()]

    def latest(self, stage: str) -> dict | None:
        found = None
        for m in self.manifests():
            if m["stage"] == stage and m.get("finished"):
                found = m
        return found

    def run_dir(self, manifest: dict) -> Path:
        return self.runs_dir / f"{manifest['run_id']:04d}-{manifest['stage']}"


def input_checksums(config: ProjectConfig) -> dict[str, str]:
    """Checksum every project input file referenced by the configuration."""
    sums: dict[str, str] = {}

    def add(path: Path | None):
        if path is None or not path.exists():
            return
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    sums[str(child.relative_to(config.root))] = sha256_file(child)
        else:
            sums[str(path.relative_to(config.root))] = sha256_file(path)

    try:
        bib, _ = config.bibliography()
        add(bib)
    except PrerequisiteError:
        pass
    for key in ("corpus_dir", "rq_file", "criteria_file", "synonyms_file",
                "annotations_dir", "claims_file", "shapes_file", "responses_file",
                "stopwords_file", "resolutions_file"):
        add(config.path(key))
    decisions = config.root / "decisions.jsonl"
    add(decisions if decisions.exists() else None)
    return sums


# ---------------------------------------------------------------------------
# Lock
# ---------------------------------------------------------------------------

class ProjectLock:
    def __init__(self, root: Path, stage: str):
        self.path = root / ".lock"
        self.stage = stage

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockHeldError(
                f"project lock held ({self.path}); another stage command is running") from None
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"pid": os.getpid(), "stage": self.stage, "started": utc_now()}, fh)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


def lock_held(root: Path) -> bool:
    return (root / ".lock").exists()


# ---------------------------------------------------------------------------
# Canonical JSON artifacts
# ---------------------------------------------------------------------------

def dump_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_artifact(run_dir: Path, name: str, content: str, manifest: RunManifest) -> Path:
    path = run_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    manifest.files[name] = hashlib.sha256(content.encode("utf-8")).hexdigest()
    return path
