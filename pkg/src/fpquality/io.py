"""CSV and header conventions for every file the tool reads or writes.

All files are UTF-8 with LF line ends.  Written files start with one comment
line ``# fpquality <version> seed=<seed> config=<sha256>`` followed by the
column header.  Floats are written in shortest round-trip form.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .errors import DataError
from .scores import SampleId, ScoreTable

log = logging.getLogger(__name__)

SCORE_COLUMNS = ["matcher", "probe_subject", "probe_finger", "probe_imprint",
                 "gallery_subject", "gallery_finger", "gallery_imprint", "score", "kind"]
ID_COLUMNS = ["subject", "finger", "imprint"]
RANK_COLUMNS = ["matcher", *ID_COLUMNS, "nms", "variant", "rank"]
LABEL_COLUMNS = [*ID_COLUMNS, "fused_rank", "class"]
PREDICTION_COLUMNS = [*ID_COLUMNS, "class"]
LATENT_COLUMNS = [*ID_COLUMNS, "q"]
DET_COLUMNS = ["threshold", "fmr", "fnmr"]
HISTORY_COLUMNS = ["phase", "run", "objective", "test_accuracy", "accepted"]


def feature_columns(n: int = 11) -> list[str]:
    return [f"f{k}" for k in range(1, n + 1)]


def config_digest(config: Mapping) -> str:
    """sha256 of the sorted ``key=value`` lines of ``config``."""
    text = "".join(f"{k}={config[k]}\n" for k in sorted(config))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def header_line(seed, config: Mapping) -> str:
    return f"# fpquality {__version__} seed={seed} config={config_digest(config)}"


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _fmt_column(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind == "f":
        out = np.array(list(map(repr, arr.tolist())), dtype=object)
        bad = ~np.isfinite(arr)
        if bad.any():
            out[bad] = [fmt_float(v) for v in arr[bad].tolist()]
        return out
    if arr.dtype.kind == "b":
        return np.where(arr, "1", "0").astype(object)
    if arr.dtype.kind == "O":
        return arr
    return arr.astype(str).astype(object)


def write_csv(path, header: str | None, columns: Mapping[str, Sequence], trailer: Sequence[str] = ()) -> None:
    """Write named columns; float columns use :func:`fmt_float`."""
    frame = pd.DataFrame({k: _fmt_column(v) for k, v in columns.items()})
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(header + "\n")
        frame.to_csv(fh, index=False, lineterminator="\n")
        for line in trailer:
            fh.write(line + "\n")


# reading ------------------------------------------------------------------

def _count_comments(path) -> tuple[int, str | None]:
    n = 0
    first = None
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if first is None:
                first = line.rstrip("\n")
            n += 1
    return n, first


def _count_trailer(path) -> int:
    """Number of '#' lines at the end of the file."""
    with open(path, "rb") as fh:
        fh.seek(0, 2)
        size = fh.tell()
        fh.seek(max(0, size - 65536))
        lines = fh.read().rstrip(b"\n").split(b"\n")
    n = 0
    for line in reversed(lines[1:] if size > 65536 else lines):
        if not line.startswith(b"#"):
            break
        n += 1
    return n


def _find_bad_row(path, skip: int, width: int):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno <= skip + 1:
                continue
            if row and row[0].startswith("#"):
                continue
            if len(row) != width:
                return lineno, len(row)
    return None, None


def read_csv(path, columns: Sequence[str], numeric: Mapping[str, str] = {}, allow_empty: Sequence[str] = ()):
    """Read a tool CSV into a DataFrame of validated columns.

    ``numeric`` maps column names to ``"int"`` or ``"float"``.  Malformed
    rows raise :class:`DataError` with the 1-based file line number.
    Trailing comment lines are ignored.  Returns ``(frame, first_data_line)``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError("file not found", path=str(path))
    skip, _ = _count_comments(path)
    try:
        # empty fields become NaN, which is far cheaper to test than string equality
        frame = pd.read_csv(path, skiprows=skip, dtype=str, keep_default_na=False, na_values=[""],
                            skip_blank_lines=False, comment=None, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError("file has no header row", line=skip + 1, path=str(path)) from None
    except pd.errors.ParserError as exc:
        lineno, got = _find_bad_row(path, skip, len(columns))
        if lineno is None:
            raise DataError(f"unreadable CSV: {exc}", path=str(path)) from None
        raise DataError(f"expected {len(columns)} fields, got {got}", line=lineno, path=str(path)) from None
    if list(frame.columns) != list(columns):
        raise DataError(f"expected columns {','.join(columns)}, got {','.join(map(str, frame.columns))}",
                        line=skip + 1, path=str(path))
    first = skip + 2
    # trailing comment lines (e.g. DET files) start with '#'
    tail = _count_trailer(path)
    if tail:
        frame = frame.iloc[:len(frame) - tail]
    for col in columns:
        raw = frame[col]
        empty = raw.isna()
        if empty.any() and col not in allow_empty:
            k = int(np.flatnonzero(empty.to_numpy())[0])
            raise DataError(f"empty value in column {col!r}", line=first + int(frame.index[k]), path=str(path))
        kind = numeric.get(col)
        if kind is None:
            continue
        text = raw.fillna("nan").to_numpy(dtype=str)
        try:
            # numpy's parser is correctly rounded; pandas' fast path is not
            v = text.astype(float)
            bad = np.isnan(v) & ~empty.to_numpy()
        except ValueError:
            v = None
            bad = pd.to_numeric(raw, errors="coerce").isna().to_numpy() & ~empty.to_numpy()
        if kind == "int" and not bad.any():
            bad = ~empty.to_numpy() & (v != np.round(v))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise DataError(f"column {col!r}: cannot parse {raw.iloc[k]!r} as {kind}",
                            line=first + int(frame.index[k]), path=str(path))
        frame[col] = v.astype(np.int64) if kind == "int" and not empty.any() else v
    return frame, first


def read_header(path) -> str | None:
    return _count_comments(path)[1]


def _sample_ids(frame, prefix=""):
    return [SampleId(s, f, int(i)) for s, f, i in zip(frame[prefix + "subject"], frame[prefix + "finger"],
                                                     frame[prefix + "imprint"])]


# scores --------------------------------------------------------------------

def score_columns(samples: Sequence[SampleId], tables: Mapping[str, ScoreTable], gallery: np.ndarray | None) -> dict:
    """Rows of the scores file: per matcher, per probe its genuine then impostor scores."""
    subj = np.array([s.subject for s in samples], dtype=object)
    fing = np.array([s.finger for s in samples], dtype=object)
    imp = np.array([s.imprint for s in samples], dtype=np.int64)
    out = {c: [] for c in SCORE_COLUMNS}
    for name, table in tables.items():
        n, m = table.genuine.shape
        k = table.impostor.shape[1]
        rows = np.arange(n)
        peer = np.array([[j for j in range(m) if j != imp[i]] for i in range(n)], dtype=np.int64)
        peer_rows = table.members[table.finger_index[:, None], peer]
        if gallery is None:
            raise DataError("impostor gallery identities are required to write a scores file")
        probe = np.repeat(rows, m - 1 + k)
        other = np.concatenate([peer_rows, gallery], axis=1).ravel()
        score = np.concatenate([table.genuine[rows[:, None], peer], table.impostor], axis=1).ravel()
        kind = np.tile(np.array(["genuine"] * (m - 1) + ["impostor"] * k, dtype=object), n)
        out["matcher"].append(np.full(probe.size, name, dtype=object))
        out["probe_subject"].append(subj[probe])
        out["probe_finger"].append(fing[probe])
        out["probe_imprint"].append(imp[probe])
        out["gallery_subject"].append(subj[other])
        out["gallery_finger"].append(fing[other])
        out["gallery_imprint"].append(imp[other])
        out["score"].append(score)
        out["kind"].append(kind)
    return {c: np.concatenate(v) for c, v in out.items()}


def write_scores(path, samples, tables: Mapping[str, ScoreTable], gallery, header: str | None) -> None:
    write_csv(path, header, score_columns(samples, tables, gallery))


def read_scores(path) -> dict:
    """Parse a scores file into one :class:`ScoreTable` per matcher."""
    frame, first = read_csv(path, SCORE_COLUMNS, {"probe_imprint": "int", "gallery_imprint": "int", "score": "float"})
    if frame.empty:
        raise DataError("scores file has no rows", path=str(path))
    line = first + frame.index.to_numpy()
    kind = frame["kind"].to_numpy()
    bad = ~np.isin(kind, ["genuine", "impostor"])
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DataError(f"kind must be genuine or impostor, got {kind[k]!r}", line=int(line[k]), path=str(path))
    if not np.isfinite(frame["score"].to_numpy()).all():
        k = int(np.flatnonzero(~np.isfinite(frame["score"].to_numpy()))[0])
        raise DataError("score must be finite", line=int(line[k]), path=str(path))
    same_subject = (frame["probe_subject"] == frame["gallery_subject"]).to_numpy()
    gen = kind == "genuine"
    bad = ~gen & same_subject
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DataError("impostor comparison within one subject", line=int(line[k]), path=str(path))
    bad = gen & ~(same_subject & (frame["probe_finger"] == frame["gallery_finger"]).to_numpy()
                  & (frame["probe_imprint"] != frame["gallery_imprint"]).to_numpy())
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DataError("genuine comparison must pair two different imprints of one finger",
                        line=int(line[k]), path=str(path))

    m = int(max(frame["probe_imprint"].max(), frame["gallery_imprint"].max())) + 1
    tables = {}
    for matcher in sorted(frame["matcher"].unique()):
        sel = (frame["matcher"] == matcher).to_numpy()
        sub = frame.loc[sel]
        sub_line = line[sel]
        keys = sub[["probe_subject", "probe_finger", "probe_imprint"]]
        codes = keys.groupby(["probe_subject", "probe_finger", "probe_imprint"], sort=True).ngroup().to_numpy()
        uniq = keys.drop_duplicates().sort_values(["probe_subject", "probe_finger", "probe_imprint"])
        samples = [SampleId(s, f, int(i)) for s, f, i in uniq.itertuples(index=False)]
        n = len(samples)
        g = (sub["kind"] == "genuine").to_numpy()
        genuine = np.full((n, m), np.nan)
        gi, gj = codes[g], sub["gallery_imprint"].to_numpy()[g]
        flat = gi * m + gj
        u, first_pos, counts = np.unique(flat, return_index=True, return_counts=True)
        if (counts > 1).any():
            dup = np.flatnonzero(flat == u[np.argmax(counts > 1)])[1]
            raise DataError("duplicate genuine comparison", line=int(sub_line[g][dup]), path=str(path))
        genuine.reshape(-1)[flat] = sub["score"].to_numpy()[g]
        n_gen = np.bincount(gi, minlength=n)
        short = np.flatnonzero(n_gen != m - 1)
        if short.size:
            raise DataError(f"matcher {matcher}: sample {samples[short[0]]} has {n_gen[short[0]]} genuine scores, "
                            f"expected {m - 1}", path=str(path))
        ii = codes[~g]
        n_imp = np.bincount(ii, minlength=n)
        k = int(n_imp[0])
        uneven = np.flatnonzero(n_imp != k)
        if k == 0 or uneven.size:
            s = samples[uneven[0]] if uneven.size else samples[0]
            raise DataError(f"matcher {matcher}: impostor score counts differ between samples (e.g. {s})",
                            path=str(path))
        order = np.argsort(ii, kind="stable")
        impostor = sub["score"].to_numpy()[~g][order].reshape(n, k)
        tables[matcher] = ScoreTable.from_arrays(matcher, samples, genuine, impostor)
    sample_sets = {m_: tuple(t.samples) for m_, t in tables.items()}
    if len(set(sample_sets.values())) > 1:
        log.warning("matchers cover different sample sets")
    return tables


# per-sample files ------------------------------------------------------------

def _id_columns(samples) -> dict:
    return {
        "subject": [s.subject for s in samples],
        "finger": [s.finger for s in samples],
        "imprint": np.array([s.imprint for s in samples], dtype=np.int64),
    }


def write_features(path, samples, features: np.ndarray, header: str | None) -> None:
    cols = _id_columns(samples)
    for k, name in enumerate(feature_columns(features.shape[1])):
        cols[name] = features[:, k]
    write_csv(path, header, cols)


def read_features(path, n_features: int = 11) -> tuple[list, np.ndarray]:
    names = feature_columns(n_features)
    frame, first = read_csv(path, [*ID_COLUMNS, *names], {"imprint": "int", **{c: "float" for c in names}})
    samples = _sample_ids(frame)
    if len(set(samples)) != len(samples):
        seen = set()
        for k, s in enumerate(samples):
            if s in seen:
                raise DataError(f"duplicate sample {s}", line=first + int(frame.index[k]), path=str(path))
            seen.add(s)
    x = frame[names].to_numpy(dtype=float)
    order = sorted(range(len(samples)), key=lambda i: samples[i])
    return [samples[i] for i in order], x[order]


def write_latent(path, samples, quality, header: str | None) -> None:
    write_csv(path, header, {**_id_columns(samples), "q": np.asarray(quality, dtype=float)})


def read_latent(path) -> dict:
    frame, _ = read_csv(path, LATENT_COLUMNS, {"imprint": "int", "q": "float"})
    return dict(zip(_sample_ids(frame), frame["q"].tolist()))


def write_ranks(path, qualities: Mapping, header: str | None) -> None:
    """One row per matcher and sample; excluded samples have empty nms/rank."""
    cols = {c: [] for c in RANK_COLUMNS}
    for name, mq in qualities.items():
        for i, s in enumerate(mq.table.samples):
            st = mq.statistics.get(s)
            cols["matcher"].append(name)
            cols["subject"].append(s.subject)
            cols["finger"].append(s.finger)
            cols["imprint"].append(s.imprint)
            cols["nms"].append(fmt_float(st.nms) if st else "")
            cols["variant"].append(st.nms_variant_used.value if st else "excluded")
            cols["rank"].append(fmt_float(mq.rank[i]))
    write_csv(path, header, cols)


def read_ranks(path) -> tuple[dict, dict]:
    """Return ``({matcher: {sample: rank}}, {matcher: {sample: nms}})`` for ranked samples."""
    frame, _ = read_csv(path, RANK_COLUMNS, {"imprint": "int", "nms": "float", "rank": "float"},
                        allow_empty=("nms", "rank"))
    ranks, nms = {}, {}
    ids = _sample_ids(frame)
    for m, s, v, r in zip(frame["matcher"], ids, frame["nms"], frame["rank"]):
        if math.isnan(r):
            continue
        ranks.setdefault(m, {})[s] = float(r)
        nms.setdefault(m, {})[s] = float(v)
    return ranks, nms


def write_labels(path, labels, header: str | None) -> None:
    labels = sorted(labels, key=lambda l: l.sample)
    write_csv(path, header, {
        **_id_columns([l.sample for l in labels]),
        "fused_rank": np.array([l.fused_rank for l in labels], dtype=float),
        "class": np.array([l.class_label for l in labels], dtype=np.int64),
    })


def read_labels(path) -> dict:
    """``{sample: class}`` from a labels file."""
    frame, _ = read_csv(path, LABEL_COLUMNS, {"imprint": "int", "fused_rank": "float", "class": "int"})
    return dict(zip(_sample_ids(frame), frame["class"].astype(int).tolist()))


def write_predictions(path, predicted: Mapping, header: str | None) -> None:
    samples = sorted(predicted)
    write_csv(path, header, {**_id_columns(samples),
                             "class": np.array([predicted[s] for s in samples], dtype=np.int64)})


def read_predictions(path) -> dict:
    frame, _ = read_csv(path, PREDICTION_COLUMNS, {"imprint": "int", "class": "int"})
    return dict(zip(_sample_ids(frame), frame["class"].astype(int).tolist()))


def write_det(path, curve, header: str | None) -> None:
    write_csv(path, header, {"threshold": curve.thresholds, "fmr": curve.fmr, "fnmr": curve.fnmr},
              trailer=[f"# eer={fmt_float(curve.eer)}"])


def write_history(path, history, header: str | None) -> None:
    write_csv(path, header, {
        "phase": np.array([h.phase for h in history], dtype=np.int64),
        "run": np.array([h.run for h in history], dtype=np.int64),
        "objective": np.array([h.objective for h in history], dtype=float),
        "test_accuracy": np.array([h.test_accuracy for h in history], dtype=float),
        "accepted": np.array([h.accepted for h in history], dtype=bool),
    })


def write_histogram(path, hist, header: str | None) -> None:
    fr = hist.fractions
    write_csv(path, header, {
        "deviation": list(hist.counts),
        "count": np.array(list(hist.counts.values()), dtype=np.int64),
        "fraction": np.array([float(fr[k]) for k in hist.counts], dtype=float),
    })


def write_matrix(path, names, matrix, header: str | None) -> None:
    cols = {"matcher": list(names)}
    for j, n in enumerate(names):
        cols[n] = np.asarray(matrix, dtype=float)[:, j]
    write_csv(path, header, cols)


def write_synth(dataset, out_dir: Path, header_extra: Mapping | None = None) -> dict:
    """Write scores, features and latent-quality files; return their paths."""
    import dataclasses

    config = {k: v for k, v in dataclasses.asdict(dataset.config).items()}
    config.update(header_extra or {})
    header = header_line(dataset.config.seed, config)
    paths = {
        "scores": out_dir / "scores.csv",
        "features": out_dir / "features.csv",
        "latent": out_dir / "latent.csv",
    }
    write_scores(paths["scores"], dataset.samples, dataset.score_tables(), dataset.gallery, header)
    write_features(paths["features"], dataset.samples, dataset.features, header)
    write_latent(paths["latent"], dataset.samples, dataset.quality, header)
    return paths
