"""Cohort ingestion: binning, tri-state labeling, windowing, normalization, splits.

Irregular observations are folded into non-overlapping 2-hour bins (most
recent measurement wins inside a bin; bins are half-open ``[start, start+2h)``).
Each prediction point looks back over a 168-bin window and is labeled per
outcome over the next 12 bins: positive if an event falls inside the horizon,
ambiguous if the outcome is undeterminable over the whole horizon, negative
otherwise. Missing values are never imputed; a per-cell indicator rides along
instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .rng import SeededRng

BIN_HOURS = 2
HORIZON_BINS = 12  # 24 hours
WINDOW_BINS = 168  # 14 days

LABEL_POSITIVE = 1
LABEL_NEGATIVE = 0
LABEL_AMBIGUOUS = -1


class DataError(ValueError):
    """Malformed cohort input."""


@dataclass(frozen=True)
class Variable:
    name: str
    abbreviation: str = ""
    unit: str = ""


@dataclass(frozen=True)
class VariableCatalog:
    """Fixed variable/outcome ordering; index i everywhere refers to this."""

    dynamic: tuple[Variable, ...]
    static: tuple[Variable, ...]
    outcomes: tuple[str, ...]

    def __post_init__(self):
        names = [v.name for v in self.dynamic] + [v.name for v in self.static] + list(self.outcomes)
        if len(set(names)) != len(names):
            raise DataError("catalog names must be unique")

    @property
    def n_dyn(self) -> int:
        return len(self.dynamic)

    @property
    def n_static(self) -> int:
        return len(self.static)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def dynamic_index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.dynamic)}

    def outcome_index(self) -> dict[str, int]:
        return {name: j for j, name in enumerate(self.outcomes)}

    def as_dict(self) -> dict:
        return {
            "dynamic": [[v.name, v.abbreviation, v.unit] for v in self.dynamic],
            "static": [[v.name, v.abbreviation, v.unit] for v in self.static],
            "outcomes": list(self.outcomes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariableCatalog":
        return cls(
            dynamic=tuple(Variable(*row) for row in d["dynamic"]),
            static=tuple(Variable(*row) for row in d["static"]),
            outcomes=tuple(d["outcomes"]),
        )


_DEFAULT_DYNAMIC = [
    ("ph_arterial", "pH", ""),
    ("peep", "PEEP", "cmH2O"),
    ("white_blood_cell", "WBC", "K/uL"),
    ("aspartate_aminotransferase", "AST", "IU/L"),
    ("chloride_serum", "Cl", "mEq/L"),
    ("creatinine_serum", "Cr", "mg/dL"),
    ("glucose_serum", "Glucose", "mg/dL"),
    ("lactate_dehydrogenase", "LDH", "IU/L"),
    ("magnesium", "Mg", "mg/dL"),
    ("alanine_transaminase", "ALT", "IU/L"),
    ("sodium_serum", "Na", "mEq/L"),
    ("total_co2_venous", "TCO2", "mEq/L"),
    ("alkaline_phosphate", "ALP", "IU/L"),
    ("blood_urea_nitrogen", "BUN", "mg/dL"),
    ("calcium_nonionized", "Ca", "mg/dL"),
    ("creatine_kinase", "CK", "IU/L"),
    ("differential_basos", "Basos", "%"),
    ("differential_eos", "Eos", "%"),
    ("differential_lymphs", "Lymphs", "%"),
    ("differential_monos", "Monos", "%"),
    ("ionized_calcium", "iCa", "mmol/L"),
    ("lactic_acid", "Lactate", "mmol/L"),
    ("total_bilirubin", "Bili", "mg/dL"),
    ("anion_gap", "AG", "mEq/L"),
    ("spontaneous_respiratory_rate", "SpontRR", "/min"),
    ("heart_rate", "HR", "bpm"),
    ("abp_systolic", "ABPsys", "mmHg"),
    ("abp_diastolic", "ABPdia", "mmHg"),
    ("abp_mean", "ABPmean", "mmHg"),
    ("central_venous_pressure", "CVP", "mmHg"),
    ("respiratory_rate", "RR", "/min"),
    ("spo2", "SpO2", "%"),
    ("temperature_f", "TempF", "F"),
    ("nibp_systolic", "NIBPsys", "mmHg"),
    ("nibp_diastolic", "NIBPdia", "mmHg"),
    ("nibp_mean", "NIBPmean", "mmHg"),
]

_DEFAULT_OUTCOMES = (
    "acute_kidney_injury",
    "acute_respiratory_distress",
    "circulatory_failure",
    "death",
    "delirium",
    "sepsis",
)


def default_catalog() -> VariableCatalog:
    """The stock ICU catalog: 36 dynamic + 3 static inputs, 6 outcomes."""
    return VariableCatalog(
        dynamic=tuple(Variable(*row) for row in _DEFAULT_DYNAMIC),
        static=(Variable("age", "Age", "years"), Variable("gender", "Gender", ""), Variable("ethnicity", "Ethnicity", "")),
        outcomes=_DEFAULT_OUTCOMES,
    )


@dataclass
class PatientRecord:
    patient_id: str
    admission_id: str
    admit_time: datetime
    age: float
    gender: str
    ethnicity: str
    # (timestamp, dynamic variable index, value)
    observations: list = field(default_factory=list)
    # (timestamp, outcome index)
    outcome_events: list = field(default_factory=list)
    # outcome index -> list of (start, end) determinability intervals
    determinability: dict = field(default_factory=dict)


@dataclass
class BinnedSeries:
    patient_id: str
    admission_id: str
    admit_time: datetime
    values: np.ndarray  # (T_total, N_dyn) float64
    missing: np.ndarray  # (T_total, N_dyn) bool, True = missing
    labels: np.ndarray  # (T_total, M) int8 tri-state
    statics: tuple  # (age, gender, ethnicity)
    n_rejected: int = 0

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]


def _bin_of(ts: datetime, admit: datetime) -> int:
    delta = (ts - admit).total_seconds()
    return int(np.floor(delta / (BIN_HOURS * 3600.0)))


def bin_observations(record: PatientRecord, catalog: VariableCatalog) -> BinnedSeries:
    """Fold a record into 2-hour bins and fill the tri-state label grid.

    Observations before admission are rejected (counted, not fatal).
    """
    n = catalog.n_dyn
    m = catalog.n_outcomes
    max_bin = -1
    rejected = 0
    kept = []
    for ts, var_idx, value in record.observations:
        b = _bin_of(ts, record.admit_time)
        if b < 0:
            rejected += 1
            continue
        kept.append((b, ts, var_idx, value))
        max_bin = max(max_bin, b)
    event_bins = []
    for ts, out_idx in record.outcome_events:
        b = _bin_of(ts, record.admit_time)
        if b < 0:
            rejected += 1
            continue
        event_bins.append((b, out_idx))
        max_bin = max(max_bin, b)
    # the grid spans the stay: observations and events, not determinability
    t_total = max_bin + 1
    values = np.zeros((t_total, n), dtype=np.float64)
    missing = np.ones((t_total, n), dtype=bool)
    # most recent measurement wins inside a bin
    kept.sort(key=lambda r: (r[0], r[1]))
    for b, _ts, var_idx, value in kept:
        values[b, var_idx] = value
        missing[b, var_idx] = False

    labels = np.full((t_total, m), LABEL_NEGATIVE, dtype=np.int8)
    # ambiguous wherever the horizon has no determinability coverage
    bin_s = BIN_HOURS * 3600.0
    horizon_starts = (np.arange(t_total) + 1) * bin_s
    horizon_ends = horizon_starts + HORIZON_BINS * bin_s
    for j in range(m):
        intervals = record.determinability.get(j, [])
        covered = np.zeros(t_total, dtype=bool)
        for s, e in intervals:
            s_off = (s - record.admit_time).total_seconds()
            e_off = (e - record.admit_time).total_seconds()
            covered |= (s_off < horizon_ends) & (e_off > horizon_starts)
        labels[~covered, j] = LABEL_AMBIGUOUS
    # positives override: the event is known to have happened
    for b, out_idx in event_bins:
        lo = max(0, b - HORIZON_BINS)
        labels[lo:b, out_idx] = LABEL_POSITIVE

    return BinnedSeries(
        patient_id=record.patient_id,
        admission_id=record.admission_id,
        admit_time=record.admit_time,
        values=values,
        missing=missing,
        labels=labels,
        statics=(record.age, record.gender, record.ethnicity),
        n_rejected=rejected,
    )


def label_window(series: BinnedSeries, outcome: int, t: int) -> int:
    """Tri-state label of outcome ``outcome`` at prediction bin ``t``."""
    return int(series.labels[t, outcome])


@dataclass
class PredictionSample:
    """One prediction point: a left-padded 168-bin window plus targets."""

    values: np.ndarray  # (T, N_dyn) raw or normalized
    missing: np.ndarray  # (T, N_dyn) bool
    statics: tuple | np.ndarray  # raw tuple before encoding, vector after
    labels: np.ndarray  # (M,) tri-state
    next_values: np.ndarray  # (N_dyn,) next-bin values (v2v target)
    next_missing: np.ndarray  # (N_dyn,) bool
    patient_id: str = ""
    admission_id: str = ""
    t_end: int = 0


def build_samples(series: BinnedSeries, window: int = WINDOW_BINS, stride: int = 1) -> list[PredictionSample]:
    """One sample per bin from the first observed bin to the last bin with a
    determinable label; short histories are left-padded as missing."""
    observed_bins = np.where(~series.missing.all(axis=1))[0]
    determinable = np.where((series.labels != LABEL_AMBIGUOUS).any(axis=1))[0]
    if len(observed_bins) == 0 or len(determinable) == 0:
        return []
    first = int(observed_bins[0])
    last = int(determinable[-1])
    samples = []
    for t_end in range(first, last + 1, stride):
        lo = t_end - window + 1
        vals = np.zeros((window, series.values.shape[1]), dtype=np.float64)
        miss = np.ones((window, series.values.shape[1]), dtype=bool)
        src_lo = max(0, lo)
        vals[src_lo - lo : window] = series.values[src_lo : t_end + 1]
        miss[src_lo - lo : window] = series.missing[src_lo : t_end + 1]
        if miss.all():
            continue
        if t_end + 1 < series.n_bins:
            nxt = series.values[t_end + 1].copy()
            nxt_miss = series.missing[t_end + 1].copy()
        else:
            nxt = np.zeros(series.values.shape[1])
            nxt_miss = np.ones(series.values.shape[1], dtype=bool)
        samples.append(
            PredictionSample(
                values=vals,
                missing=miss,
                statics=series.statics,
                labels=series.labels[t_end].copy(),
                next_values=nxt,
                next_missing=nxt_miss,
                patient_id=series.patient_id,
                admission_id=series.admission_id,
                t_end=t_end,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormStats:
    mean: np.ndarray  # (N_dyn,)
    std: np.ndarray  # (N_dyn,) floored at 1e-6
    age_mean: float
    age_std: float
    gender_categories: tuple[str, ...]  # "unknown" is always the final slot
    ethnicity_categories: tuple[str, ...]
    n_constant: int = 0

    @property
    def n_static_encoded(self) -> int:
        return 1 + len(self.gender_categories) + len(self.ethnicity_categories)

    def encode_statics(self, statics: tuple) -> np.ndarray:
        age, gender, ethnicity = statics
        vec = np.zeros(self.n_static_encoded)
        vec[0] = (float(age) - self.age_mean) / self.age_std
        gi = self.gender_categories.index(gender) if gender in self.gender_categories else len(self.gender_categories) - 1
        vec[1 + gi] = 1.0
        off = 1 + len(self.gender_categories)
        ei = (
            self.ethnicity_categories.index(ethnicity)
            if ethnicity in self.ethnicity_categories
            else len(self.ethnicity_categories) - 1
        )
        vec[off + ei] = 1.0
        return vec

    def static_group_slices(self) -> list[slice]:
        """Encoded-channel span of each raw static variable (age, gender, ethnicity)."""
        g = len(self.gender_categories)
        return [slice(0, 1), slice(1, 1 + g), slice(1 + g, self.n_static_encoded)]

    def as_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "age_mean": self.age_mean,
            "age_std": self.age_std,
            "gender_categories": list(self.gender_categories),
            "ethnicity_categories": list(self.ethnicity_categories),
            "n_constant": self.n_constant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            age_mean=d["age_mean"],
            age_std=d["age_std"],
            gender_categories=tuple(d["gender_categories"]),
            ethnicity_categories=tuple(d["ethnicity_categories"]),
            n_constant=d.get("n_constant", 0),
        )


def normalize_fit(samples: list[PredictionSample]) -> NormStats:
    """Per-variable z-score stats over non-missing cells of the training split."""
    if not samples:
        raise DataError("cannot fit normalization on an empty training set")
    n = samples[0].values.shape[1]
    total = np.zeros(n)
    total_sq = np.zeros(n)
    count = np.zeros(n)
    ages = []
    genders = set()
    ethnicities = set()
    for s in samples:
        obs = ~s.missing
        total += np.where(obs, s.values, 0.0).sum(axis=0)
        total_sq += np.where(obs, s.values**2, 0.0).sum(axis=0)
        count += obs.sum(axis=0)
        age, gender, ethnicity = s.statics
        ages.append(float(age))
        genders.add(str(gender))
        ethnicities.add(str(ethnicity))
    safe = np.maximum(count, 1.0)
    mean = total / safe
    var = np.maximum(total_sq / safe - mean**2, 0.0)
    std = np.sqrt(var)
    n_constant = int((std < 1e-6).sum())
    std = np.maximum(std, 1e-6)
    age_arr = np.asarray(ages)
    return NormStats(
        mean=mean,
        std=std,
        age_mean=float(age_arr.mean()),
        age_std=float(max(age_arr.std(), 1e-6)),
        gender_categories=tuple(sorted(genders)) + ("unknown",),
        ethnicity_categories=tuple(sorted(ethnicities)) + ("unknown",),
        n_constant=n_constant,
    )


def normalize_apply(sample: PredictionSample, stats: NormStats) -> PredictionSample:
    """Z-score dynamic values (missing cells pinned to 0) and encode statics."""
    obs = ~sample.missing
    vals = np.where(obs, (sample.values - stats.mean) / stats.std, 0.0)
    nxt_obs = ~sample.next_missing
    nxt = np.where(nxt_obs, (sample.next_values - stats.mean) / stats.std, 0.0)
    return PredictionSample(
        values=vals,
        missing=sample.missing.copy(),
        statics=stats.encode_statics(sample.statics),
        labels=sample.labels.copy(),
        next_values=nxt,
        next_missing=sample.next_missing.copy(),
        patient_id=sample.patient_id,
        admission_id=sample.admission_id,
        t_end=sample.t_end,
    )


def normalize_unapply(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return values * stats.std + stats.mean


@dataclass
class SampleSet:
    """Column-stacked normalized samples, ready for batched model math."""

    values: np.ndarray  # (n, T, N)
    missing: np.ndarray  # (n, T, N) bool
    statics: np.ndarray  # (n, S_enc)
    labels: np.ndarray  # (n, M) int8
    next_values: np.ndarray  # (n, N)
    next_missing: np.ndarray  # (n, N) bool
    patient_ids: list[str]
    t_ends: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.values.shape[0]

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(
            values=self.values[idx],
            missing=self.missing[idx],
            statics=self.statics[idx],
            labels=self.labels[idx],
            next_values=self.next_values[idx],
            next_missing=self.next_missing[idx],
            patient_ids=[self.patient_ids[int(i)] for i in idx],
            t_ends=self.t_ends[idx],
        )


def stack_samples(samples: list[PredictionSample]) -> SampleSet:
    if not samples:
        raise DataError("cannot stack an empty sample list")
    return SampleSet(
        values=np.stack([s.values for s in samples]),
        missing=np.stack([s.missing for s in samples]),
        statics=np.stack([np.asarray(s.statics, dtype=np.float64) for s in samples]),
        labels=np.stack([s.labels for s in samples]),
        next_values=np.stack([s.next_values for s in samples]),
        next_missing=np.stack([s.next_missing for s in samples]),
        patient_ids=[s.patient_id for s in samples],
        t_ends=np.array([s.t_end for s in samples], dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# splits


@dataclass
class DatasetSplits:
    train: list
    val: list
    test_id: list
    test_ood: list

    def as_id_dict(self) -> dict:
        return {
            "train": sorted(r.patient_id for r in self.train),
            "val": sorted(r.patient_id for r in self.val),
            "test-id": sorted(r.patient_id for r in self.test_id),
            "test-ood": sorted(r.patient_id for r in self.test_ood),
        }


def _split_eligible(eligible, ood, ratios, seed):
    by_patient: dict[str, list] = {}
    for r in eligible:
        by_patient.setdefault(r.patient_id, []).append(r)
    ids = sorted(by_patient)
    rng = SeededRng(seed, ("split",))
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(shuffled)
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * (ratios[0] + ratios[1]))) - n_train
    train_ids = set(shuffled[:n_train])
    val_ids = set(shuffled[n_train : n_train + n_val])
    splits = DatasetSplits(train=[], val=[], test_id=[], test_ood=list(ood))
    for pid in ids:
        bucket = splits.train if pid in train_ids else splits.val if pid in val_ids else splits.test_id
        bucket.extend(by_patient[pid])
    return splits


def split_by_age(records, threshold: float = 75.0, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplits:
    """Patients at or under the age threshold go 80/10/10; older are test-ood."""
    eligible = [r for r in records if r.age <= threshold]
    ood = [r for r in records if r.age > threshold]
    return _split_eligible(eligible, ood, ratios, seed)


def split_by_time(records, cutoff: datetime, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplits:
    """Admissions before the cutoff go 80/10/10; later admissions are test-ood."""
    eligible = [r for r in records if r.admit_time < cutoff]
    ood = [r for r in records if r.admit_time >= cutoff]
    return _split_eligible(eligible, ood, ratios, seed)


# ---------------------------------------------------------------------------
# binary dataset cache (one .npy per column, deterministic bytes)


def save_sample_set(samples: SampleSet, directory: str | Path, prefix: str) -> None:
    import json

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / f"{prefix}_values.npy", samples.values)
    np.save(directory / f"{prefix}_missing.npy", samples.missing)
    np.save(directory / f"{prefix}_statics.npy", samples.statics)
    np.save(directory / f"{prefix}_labels.npy", samples.labels)
    np.save(directory / f"{prefix}_next_values.npy", samples.next_values)
    np.save(directory / f"{prefix}_next_missing.npy", samples.next_missing)
    np.save(directory / f"{prefix}_t_ends.npy", samples.t_ends)
    (directory / f"{prefix}_patients.json").write_text(
        json.dumps(samples.patient_ids, separators=(",", ":")) + "\n"
    )


def load_sample_set(directory: str | Path, prefix: str) -> SampleSet:
    import json

    directory = Path(directory)
    return SampleSet(
        values=np.load(directory / f"{prefix}_values.npy"),
        missing=np.load(directory / f"{prefix}_missing.npy"),
        statics=np.load(directory / f"{prefix}_statics.npy"),
        labels=np.load(directory / f"{prefix}_labels.npy"),
        next_values=np.load(directory / f"{prefix}_next_values.npy"),
        next_missing=np.load(directory / f"{prefix}_next_missing.npy"),
        patient_ids=json.loads((directory / f"{prefix}_patients.json").read_text()),
        t_ends=np.load(directory / f"{prefix}_t_ends.npy"),
    )


# ---------------------------------------------------------------------------
# CSV interchange


def _parse_ts(text: str) -> datetime:
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


@dataclass
class Diagnostic:
    file: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}: {self.message}"


def load_cohort_csv(directory: str | Path, catalog: VariableCatalog):
    """Read the four-file cohort interchange format.

    Returns ``(records, diagnostics)``; malformed rows are skipped and
    reported with their line numbers rather than aborting the load.
    """
    directory = Path(directory)
    diags: list[Diagnostic] = []
    records: dict[tuple[str, str], PatientRecord] = {}
    var_index = catalog.dynamic_index()
    out_index = catalog.outcome_index()

    patients_path = directory / "patients.csv"
    if not patients_path.exists():
        raise DataError(f"missing {patients_path}")
    with open(patients_path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                key = (row["patient_id"], row["admission_id"])
                records[key] = PatientRecord(
                    patient_id=row["patient_id"],
                    admission_id=row["admission_id"],
                    admit_time=_parse_ts(row["admit_time"]),
                    age=float(row["age"]),
                    gender=row["gender"],
                    ethnicity=row["ethnicity"],
                )
            except (KeyError, ValueError) as e:
                diags.append(Diagnostic("patients.csv", lineno, str(e)))

    seen_obs = set()
    with open(directory / "observations.csv", newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            key = (row.get("patient_id", ""), row.get("admission_id", ""))
            rec = records.get(key)
            if rec is None:
                diags.append(Diagnostic("observations.csv", lineno, f"unknown admission {key}"))
                continue
            var = row.get("variable", "")
            if var not in var_index:
                diags.append(Diagnostic("observations.csv", lineno, f"unknown variable {var!r}"))
                continue
            try:
                ts = _parse_ts(row["timestamp_iso8601"])
                value = float(row["value"])
            except (KeyError, ValueError) as e:
                diags.append(Diagnostic("observations.csv", lineno, f"unparsable row: {e}"))
                continue
            dedup = (key, row["timestamp_iso8601"], var)
            if dedup in seen_obs:
                diags.append(Diagnostic("observations.csv", lineno, f"duplicate observation {dedup}"))
                continue
            seen_obs.add(dedup)
            rec.observations.append((ts, var_index[var], value))

    events_path = directory / "events.csv"
    if events_path.exists():
        with open(events_path, newline="") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                key = (row.get("patient_id", ""), row.get("admission_id", ""))
                rec = records.get(key)
                if rec is None:
                    diags.append(Diagnostic("events.csv", lineno, f"unknown admission {key}"))
                    continue
                out = row.get("outcome", "")
                if out not in out_index:
                    diags.append(Diagnostic("events.csv", lineno, f"unknown outcome {out!r}"))
                    continue
                try:
                    rec.outcome_events.append((_parse_ts(row["timestamp_iso8601"]), out_index[out]))
                except (KeyError, ValueError) as e:
                    diags.append(Diagnostic("events.csv", lineno, f"unparsable row: {e}"))

    det_path = directory / "determinability.csv"
    if det_path.exists():
        with open(det_path, newline="") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                key = (row.get("patient_id", ""), row.get("admission_id", ""))
                rec = records.get(key)
                if rec is None:
                    diags.append(Diagnostic("determinability.csv", lineno, f"unknown admission {key}"))
                    continue
                out = row.get("outcome", "")
                if out not in out_index:
                    diags.append(Diagnostic("determinability.csv", lineno, f"unknown outcome {out!r}"))
                    continue
                try:
                    start = _parse_ts(row["start_iso8601"])
                    end = _parse_ts(row["end_iso8601"])
                except (KeyError, ValueError) as e:
                    diags.append(Diagnostic("determinability.csv", lineno, f"unparsable row: {e}"))
                    continue
                rec.determinability.setdefault(out_index[out], []).append((start, end))

    ordered = [records[k] for k in sorted(records)]
    for rec in ordered:
        rec.observations.sort(key=lambda o: (o[0], o[1]))
        rec.outcome_events.sort(key=lambda e: (e[0], e[1]))
    return ordered, diags


def export_cohort_csv(records, catalog: VariableCatalog, directory: str | Path) -> None:
    """Write records back out in the four-file interchange format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def iso(ts: datetime) -> str:
        return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    with open(directory / "patients.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "admission_id", "admit_time", "age", "gender", "ethnicity"])
        for r in records:
            w.writerow([r.patient_id, r.admission_id, iso(r.admit_time), f"{r.age:g}", r.gender, r.ethnicity])
    with open(directory / "observations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "admission_id", "timestamp_iso8601", "variable", "value"])
        for r in records:
            for ts, vi, value in r.observations:
                w.writerow([r.patient_id, r.admission_id, iso(ts), catalog.dynamic[vi].name, repr(float(value))])
    with open(directory / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "admission_id", "timestamp_iso8601", "outcome"])
        for r in records:
            for ts, oj in r.outcome_events:
                w.writerow([r.patient_id, r.admission_id, iso(ts), catalog.outcomes[oj]])
    with open(directory / "determinability.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "admission_id", "outcome", "start_iso8601", "end_iso8601"])
        for r in records:
            for oj, intervals in sorted(r.determinability.items()):
                for start, end in intervals:
                    w.writerow([r.patient_id, r.admission_id, catalog.outcomes[oj], iso(start), iso(end)])
