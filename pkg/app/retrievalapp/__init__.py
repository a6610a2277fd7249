from .routes import router as retrieval_router

__all__ = ["retrieval_router"]
