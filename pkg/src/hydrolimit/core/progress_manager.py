"""
Progress management module for hydrolimit
"""

import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Dict, Any, Optional, Callable, List, Iterable

from .logger import logger


class StepStatus(Enum):
    """Experiment step status"""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    SKIPPED = "skipped"


class ExperimentStep(Enum):
    """Steps of the experiment pipelines"""
    VALIDATE = "validate"
    DESIGN_RATES = "design_rates"
    SOLVE_WAVE = "solve_wave"
    SOLVE_PDE = "solve_pde"
    SIMULATE = "simulate"
    SELECT_PARAMETERS = "select_parameters"
    RESIDUALS = "residuals"
    SANDWICH = "sandwich"
    COMPARE = "compare"
    WRITE_OUTPUT = "write_output"


@dataclass
class StepProgress:
    """Progress information for a single step"""
    step_id: str
    status: StepStatus = StepStatus.PENDING
    progress: float = 0.0
    start_time: Optional[datetime] = None
    end_time: Optional[datetime] = None
    duration: Optional[float] = None
    error_message: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        return {
            "step_id": self.step_id,
            "status": self.status.value,
            "progress": self.progress,
            "duration": self.duration,
            "error_message": self.error_message,
            "metadata": self.metadata,
        }


@dataclass
class RunProgress:
    """Progress of one experiment run"""
    run_id: str
    experiment: str
    status: StepStatus = StepStatus.PENDING
    created_at: datetime = field(default_factory=datetime.now)
    steps: Dict[str, StepProgress] = field(default_factory=dict)

    @property
    def overall_progress(self) -> float:
        if not self.steps:
            return 0.0
        return sum(s.progress for s in self.steps.values()) / len(self.steps)

    def refresh_status(self):
        """Derive the run status from its steps"""
        statuses = [s.status for s in self.steps.values()]
        if any(s == StepStatus.FAILED for s in statuses):
            self.status = StepStatus.FAILED
        elif statuses and all(s in (StepStatus.COMPLETED, StepStatus.SKIPPED) for s in statuses):
            self.status = StepStatus.COMPLETED
        elif any(s == StepStatus.RUNNING for s in statuses):
            self.status = StepStatus.RUNNING

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization (no wall-clock fields besides created_at)"""
        return {
            "run_id": self.run_id,
            "experiment": self.experiment,
            "status": self.status.value,
            "overall_progress": self.overall_progress,
            "created_at": self.created_at.isoformat(),
            "steps": {k: v.to_dict() for k, v in self.steps.items()},
        }


class ProgressManager:
    """Tracks experiment runs and notifies listeners of step transitions"""

    def __init__(self):
        self.runs: Dict[str, RunProgress] = {}
        self.callbacks: Dict[str, List[Callable[[str, str, Dict[str, Any]], None]]] = {}
        self.lock = threading.RLock()

    def create_run(self, experiment: str, steps: Iterable[ExperimentStep],
                   run_id: Optional[str] = None) -> RunProgress:
        """Create a run with its ordered list of steps"""
        with self.lock:
            run_id = run_id or f"{experiment}-{uuid.uuid4().hex[:8]}"
            run = RunProgress(run_id=run_id, experiment=experiment)
            for step in steps:
                run.steps[step.value] = StepProgress(step_id=step.value)
            self.runs[run_id] = run
            logger.debug(f"Created run progress: {run_id}")
            return run

    def get_run(self, run_id: str) -> Optional[RunProgress]:
        with self.lock:
            return self.runs.get(run_id)

    def _step(self, run_id: str, step: ExperimentStep) -> Optional[StepProgress]:
        run = self.runs.get(run_id)
        if run is None:
            return None
        return run.steps.setdefault(step.value, StepProgress(step_id=step.value))

    def start_step(self, run_id: str, step: ExperimentStep):
        """Mark a step as running"""
        with self.lock:
            progress = self._step(run_id, step)
            if progress is None:
                return
            progress.status = StepStatus.RUNNING
            progress.start_time = datetime.now()
            self.runs[run_id].refresh_status()
        logger.log_experiment_step(step.value, "started")
        self._notify_callbacks(run_id, "step_started", {"step_id": step.value})

    def update_step_progress(self, run_id: str, step: ExperimentStep, progress: float,
                             metadata: Optional[Dict[str, Any]] = None):
        """Update the fractional progress of a step"""
        with self.lock:
            entry = self._step(run_id, step)
            if entry is None:
                return
            entry.progress = max(0.0, min(1.0, progress))
            if metadata:
                entry.metadata.update(metadata)
        self._notify_callbacks(run_id, "step_progress", {"step_id": step.value, "progress": progress})

    def complete_step(self, run_id: str, step: ExperimentStep,
                      metadata: Optional[Dict[str, Any]] = None):
        """Mark a step as completed"""
        with self.lock:
            entry = self._step(run_id, step)
            if entry is None:
                return
            entry.status = StepStatus.COMPLETED
            entry.progress = 1.0
            entry.end_time = datetime.now()
            if entry.start_time:
                entry.duration = (entry.end_time - entry.start_time).total_seconds()
            if metadata:
                entry.metadata.update(metadata)
            self.runs[run_id].refresh_status()
            duration = entry.duration
        logger.log_experiment_step(step.value, "completed", {"duration": duration})
        self._notify_callbacks(run_id, "step_completed", {"step_id": step.value})

    def fail_step(self, run_id: str, step: ExperimentStep, error_message: str):
        """Mark a step as failed"""
        with self.lock:
            entry = self._step(run_id, step)
            if entry is None:
                return
            entry.status = StepStatus.FAILED
            entry.end_time = datetime.now()
            entry.error_message = error_message
            self.runs[run_id].refresh_status()
        logger.log_experiment_step(step.value, "failed", {"error": error_message})
        self._notify_callbacks(run_id, "step_failed", {"step_id": step.value, "error": error_message})

    def skip_step(self, run_id: str, step: ExperimentStep):
        with self.lock:
            entry = self._step(run_id, step)
            if entry is None:
                return
            entry.status = StepStatus.SKIPPED
            entry.progress = 1.0
            self.runs[run_id].refresh_status()

    def register_callback(self, run_id: str, callback: Callable[[str, str, Dict[str, Any]], None]):
        """Register a listener for a run ('*' listens to all runs)"""
        with self.lock:
            self.callbacks.setdefault(run_id, []).append(callback)

    def _notify_callbacks(self, run_id: str, event: str, data: Dict[str, Any]):
        with self.lock:
            listeners = list(self.callbacks.get(run_id, [])) + list(self.callbacks.get("*", []))
        for callback in listeners:
            try:
                callback(run_id, event, data)
            except Exception as e:
                logger.error(f"Progress callback failed: {e}")


# Global progress manager instance
progress_manager = ProgressManager()
