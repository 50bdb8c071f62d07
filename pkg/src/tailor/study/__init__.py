from .store import BIRADS_SCORES, MALIGNANT_READS, Read, Session, StudyError, StudyStore
from .metrics import session_metrics, stage_metrics
from .service import create_app

__all__ = ["BIRADS_SCORES", "MALIGNANT_READS", "Read", "Session", "StudyError",
           "StudyStore", "create_app", "session_metrics", "stage_metrics"]
