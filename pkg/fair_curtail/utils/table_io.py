from pathlib import Path
from typing import Optional, Union

import polars as pl

from ..api.schemas import OutputFormat
from ..core.config import get_settings
from ..core.exceptions import FairCurtailError, ParseError

class TableIOError(FairCurtailError):
    
    pass

class TableStore:
    """Result tables under one output directory, as CSV or row-oriented JSON."""
    
    def __init__(self, output_dir: Optional[Union[str, Path]] = None):
        
        self.output_dir = Path(output_dir) if output_dir is not None else get_settings().OUTPUT_DIR
    
    def path_for(self, name: str, fmt: OutputFormat = OutputFormat.CSV) -> Path:
        
        return self.output_dir / f"{name}.{fmt.value}"
    
    def write(self, df: pl.DataFrame, name: str, fmt: OutputFormat = OutputFormat.CSV) -> Path:
        
        path = self.path_for(name, fmt)
        path.parent.mkdir(parents=True, exist_ok=True)
        
        try:
            if fmt == OutputFormat.JSON:
                df.write_json(path)
            else:
                df.write_csv(path, float_precision=9)
        except (OSError, pl.exceptions.PolarsError) as e:
            raise TableIOError(f"Failed to write table {name}: {e}")
        
        return path
    
    def read(self, path: Union[str, Path]) -> pl.DataFrame:
        
        path = Path(path)
        if not path.exists():
            raise ParseError(str(path), "file not found")
        
        try:
            if path.suffix.lower() == ".json":
                return pl.read_json(path)
            return pl.read_csv(path)
        except (OSError, pl.exceptions.PolarsError) as e:
            raise ParseError(str(path), str(e))

def get_table_store(output_dir: Optional[Union[str, Path]] = None) -> TableStore:
    
    return TableStore(output_dir)
