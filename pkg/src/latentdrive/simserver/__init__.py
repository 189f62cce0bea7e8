from latentdrive.simserver.app import create_app
from latentdrive.simserver.session import ModelBundle, SessionError, SimSession

__all__ = ["ModelBundle", "SessionError", "SimSession", "create_app"]
