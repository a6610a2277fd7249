from pathlib import Path
from typing import Dict, Optional

from app.config import ServiceSettings


class Check:
    """Reports whether the artifacts the service reads are in place."""

    def __init__(self, settings: Optional[ServiceSettings] = None):
        self.settings = settings or ServiceSettings.from_env()

    def artifacts(self) -> Dict[str, str]:
        paths = {
            "collection": self.settings.collection_path,
            "index": self.settings.index_path,
            "qrels": self.settings.qrels_path,
            "topics": self.settings.topics_path,
        }
        return {name: _state(path) for name, path in paths.items()}

    def checking(self) -> str:
        artifacts = self.artifacts()
        if "missing" in artifacts.values():
            return "degraded"
        if artifacts["collection"] == "ready" or artifacts["index"] == "ready":
            return "ready"
        return "unconfigured"


def _state(path: Optional[Path]) -> str:
    if path is None:
        return "unset"
    return "ready" if Path(path).exists() else "missing"
