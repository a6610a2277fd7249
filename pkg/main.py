import logging
from importlib import import_module
from typing import List, Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.check import Check
from app.config import ServiceSettings, configure_logging

settings = ServiceSettings.from_env()
configure_logging(settings.log_level)
logger = logging.getLogger("main")

app = FastAPI(title="qrels-sensitivity")

# Configure CORS - allows local notebooks and dashboards to query the API
DEFAULT_ALLOWED_ORIGINS = [
    "http://localhost:3000",
    "http://localhost:8888",
]

origins = settings.allowed_origins or DEFAULT_ALLOWED_ORIGINS

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


SERVICE_CONFIG = [
    {
        "name": "retrieval",
        "module": "app.retrievalapp",
        "router_name": "retrieval_router",
        "prefix": "/api/retrieval",
        "tags": ["retrieval"],
        "enabled": True,
    },
    {
        "name": "evaluation",
        "module": "app.evaluationapp",
        "router_name": "evaluation_router",
        "prefix": "/api/evaluation",
        "tags": ["evaluation"],
        "enabled": True,
    },
]


def _resolve_enabled_services(config: List[dict], enabled: Optional[List[str]]) -> List[str]:
    """Enable/disable services based on ENABLED_SERVICES env var."""

    if not enabled:
        return [service["name"] for service in config if service.get("enabled", True)]

    requested = {service.lower() for service in enabled}
    active = []
    for service in config:
        if service["name"].lower() in requested:
            service["enabled"] = True
            active.append(service["name"])
        else:
            service["enabled"] = False
    return active


registered_services: List[str] = []
active_services = _resolve_enabled_services(SERVICE_CONFIG, settings.enabled_services)

for service in SERVICE_CONFIG:
    if not service.get("enabled", True):
        continue
    try:
        module = import_module(service["module"])
        router = getattr(module, service["router_name"])
        app.include_router(router, prefix=service["prefix"], tags=service["tags"])
        registered_services.append(service["name"])
    except Exception as exc:
        logger.warning("Failed to load service '%s' from %s - %s", service["name"], service["module"], exc)


@app.get("/")
def main():
    return {"message": "qrels sensitivity toolkit", "services": registered_services}


@app.get("/health")
def health_check():
    checker = Check()
    return {
        "status": checker.checking(),
        "artifacts": checker.artifacts(),
        "services": registered_services or active_services,
    }
