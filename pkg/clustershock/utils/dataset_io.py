import io
import re

import numpy as np
import pandas as pd

from clustershock.core.design import ObservedSample
from clustershock.core.errors import ParseError, ValidationError
from clustershock.schemas.dataset import DatasetSpec
from clustershock.utils.common_utils import atomic_write_text
from clustershock.utils.log_util import logger

# header is line 1, first data row is line 2
_FIRST_DATA_LINE = 2


def _line_of(df: pd.DataFrame, mask: pd.Series) -> int:
    return int(np.flatnonzero(mask.to_numpy())[0]) + _FIRST_DATA_LINE


def read_frame(source: str | io.StringIO, columns: list[str]) -> pd.DataFrame:
    """Read a UTF-8 CSV with a header and check the mapped columns are present and complete."""
    try:
        df = pd.read_csv(source, float_precision="round_trip", encoding="utf-8", skipinitialspace=True)
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(str(e).strip(), line=int(match.group(1)) if match else None) from e
    for col in columns:
        if col not in df.columns:
            raise ParseError(f"missing column '{col}'", line=1)
        if df[col].isna().any():
            raise ParseError(f"missing value in column '{col}'", line=_line_of(df, df[col].isna()))
    return df


def _outcome(df: pd.DataFrame, col: str) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    if values.isna().any():
        raise ParseError(f"non-numeric value in column '{col}'", line=_line_of(df, values.isna()))
    return values.to_numpy(dtype=float)


def _treated(df: pd.DataFrame, col: str) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    bad = ~values.isin([0, 1])
    if bad.any():
        raise ValidationError(f"line {_line_of(df, bad)}: column '{col}' must be 0 or 1")
    return values.to_numpy().astype(np.int8)


def _labels(values: np.ndarray) -> tuple:
    return tuple(v.item() if isinstance(v, np.generic) else v for v in values)


def sample_from_frame(df: pd.DataFrame, spec: DatasetSpec) -> ObservedSample:
    codes, uniques = pd.factorize(df[spec.stratum_col], sort=True)
    cluster_of_stratum = None
    cluster_labels: tuple = ()
    if spec.cluster_col is not None:
        per_stratum = df.groupby(codes)[spec.cluster_col].nunique()
        split = per_stratum[per_stratum > 1]
        if len(split):
            raise ValidationError(
                f"cluster column '{spec.cluster_col}' splits stratum {_labels(uniques.to_numpy())[split.index[0]]}"
            )
        first = df.groupby(codes)[spec.cluster_col].first().sort_index()
        cluster_codes, cluster_uniques = pd.factorize(first, sort=True)
        cluster_of_stratum = cluster_codes.astype(np.int64)
        cluster_labels = _labels(cluster_uniques.to_numpy())
    return ObservedSample(
        stratum=codes.astype(np.int64),
        treated=_treated(df, spec.treated_col),
        y=_outcome(df, spec.outcome_col),
        labels=_labels(uniques.to_numpy()),
        cluster_of_stratum=cluster_of_stratum,
        cluster_labels=cluster_labels,
    )


def _columns(spec: DatasetSpec) -> list[str]:
    cols = [spec.stratum_col, spec.treated_col, spec.outcome_col]
    return cols + ([spec.cluster_col] if spec.cluster_col else [])


def load_dataset(spec: DatasetSpec, text: str | None = None) -> ObservedSample:
    """Read ``spec.path`` (or CSV ``text``) into a validated ObservedSample."""
    source = io.StringIO(text) if text is not None else spec.path
    df = read_frame(source, _columns(spec))
    sample = sample_from_frame(df, spec)
    logger.info(f"loaded {sample.n} rows, K={sample.K}, clusters={sample.n_clusters} from {spec.path or '<text>'}")
    return sample


def load_contrasts(
    spec: DatasetSpec, treated_cols: list[str], outcome_cols: list[str], text: str | None = None
) -> list[tuple[str, str, ObservedSample]]:
    """One ObservedSample per (treatment column, outcome column) pair, file read once."""
    source = io.StringIO(text) if text is not None else spec.path
    cols = [spec.stratum_col, *treated_cols, *outcome_cols] + ([spec.cluster_col] if spec.cluster_col else [])
    df = read_frame(source, list(dict.fromkeys(cols)))
    contrasts = []
    for treated in treated_cols:
        for outcome in outcome_cols:
            sub = spec.model_copy(update={"treated_col": treated, "outcome_col": outcome})
            contrasts.append((treated, outcome, sample_from_frame(df, sub)))
    return contrasts


def sample_to_csv(sample: ObservedSample, with_cluster: bool = False) -> str:
    labels = np.array(sample.labels, dtype=object)
    frame = {
        "stratum": labels[sample.stratum],
        "treated": sample.treated.astype(int),
        "y": sample.y,
    }
    if with_cluster and sample.cluster_of_stratum is not None:
        clusters = np.array(sample.cluster_labels, dtype=object)
        frame["cluster"] = clusters[sample.cluster_of_stratum][sample.stratum]
    return pd.DataFrame(frame).to_csv(index=False, float_format="%.17g", lineterminator="\n")


def write_sample(sample: ObservedSample, path: str, with_cluster: bool = False) -> None:
    atomic_write_text(path, sample_to_csv(sample, with_cluster))
    logger.info(f"wrote {sample.n} rows to {path}")
