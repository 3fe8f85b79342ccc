from datetime import datetime, time
from typing import Optional, Union

from dateutil import parser as dateutil_parser
from dateutil.parser import ParserError

from ..core.constants import MINUTES_PER_HOUR
from ..core.exceptions import ParseError

class TimeLabelError(ParseError):
    
    def __init__(self, value: str, reason: str = "Unknown format"):
        self.value = value
        super().__init__(value, reason)

KNOWN_FORMATS: tuple[str, ...] = (
    "%H:%M",
    "%H:%M:%S",
    "%H%M",
    "%I:%M %p",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S",
)

def standardize_time_label(
    value: Union[str, time, datetime, None],
    raise_on_error: bool = True
) -> Optional[str]:
    """Normalise a timestep label to ``HH:MM``; ``24:00`` is kept as end-of-day."""
    if value is None:
        if raise_on_error:
            raise TimeLabelError("None", "Null value provided")
        return None
    
    if isinstance(value, datetime):
        return value.strftime("%H:%M")
    
    if isinstance(value, time):
        return value.strftime("%H:%M")
    
    value = str(value).strip()
    
    if not value:
        if raise_on_error:
            raise TimeLabelError("", "Empty string provided")
        return None
    
    if value in ("24:00", "24:00:00"):
        return "24:00"
    
    parsed = _try_known_formats(value)
    if parsed:
        return parsed.strftime("%H:%M")
    
    try:
        return dateutil_parser.parse(value).strftime("%H:%M")
    except (ParserError, ValueError, OverflowError) as e:
        if raise_on_error:
            raise TimeLabelError(value, str(e))
        return None

def _try_known_formats(value: str) -> Optional[datetime]:
    
    for fmt in KNOWN_FORMATS:
        try:
            return datetime.strptime(value, fmt)
        except ValueError:
            continue
    return None

def minutes_of_day(label: str) -> int:
    
    hours, minutes = standardize_time_label(label).split(":")
    return int(hours) * MINUTES_PER_HOUR + int(minutes)

def label_for_step(step: int, resolution_minutes: int) -> str:
    
    total = step * resolution_minutes
    return f"{total // MINUTES_PER_HOUR:02d}:{total % MINUTES_PER_HOUR:02d}"

def infer_resolution(labels: list[str]) -> Optional[int]:
    """Return the common spacing in minutes, or raise if the labels are unevenly spaced."""
    if len(labels) < 2:
        return None
    
    minutes = [minutes_of_day(label) for label in labels]
    gaps = {b - a for a, b in zip(minutes, minutes[1:])}
    
    if len(gaps) != 1 or next(iter(gaps)) <= 0:
        raise TimeLabelError(",".join(labels[:4]) + ",...", "timesteps are not uniformly spaced")
    
    return gaps.pop()
