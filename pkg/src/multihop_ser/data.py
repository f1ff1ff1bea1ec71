"""Utterance records, label rules, feature preparation and fold construction."""

from __future__ import annotations

import hashlib
import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .optim import derive_rng

EMOTIONS = ("angry", "happy", "sad", "neutral")
LABEL_INDEX = {name: i for i, name in enumerate(EMOTIONS)}

# IEMOCAP categories that exist but sit outside the four-class setup
EXCLUDED_LABELS = frozenset(
    {"frustration", "surprise", "fear", "disgust", "other", "xxx"}
)
_ALIASES = {
    "excitement": "happy",
    "excited": "happy",
    "exc": "happy",
    "happiness": "happy",
    "hap": "happy",
    "anger": "angry",
    "ang": "angry",
    "sadness": "sad",
    "neu": "neutral",
    "fru": "frustration",
    "sur": "surprise",
    "fea": "fear",
    "dis": "disgust",
    "oth": "other",
}

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
MAX_AUDIO_LEN = 750
MAX_TEXT_LEN = 128


class DataError(ValueError):
    """A manifest record or feature file is unusable."""


class UnknownLabelError(DataError):
    pass


@dataclass
class Utterance:
    id: str
    audio: np.ndarray  # [T_a, d_audio]
    prosody: np.ndarray  # [d_p]
    transcript: str
    label: str | None = None
    session: str = ""

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.float64)
        self.prosody = np.asarray(self.prosody, dtype=np.float64).reshape(-1)
        if self.audio.ndim != 2 or self.audio.shape[0] < 1:
            raise DataError(f"{self.id}: audio must be a non-empty [T, d] matrix")


# -- labels -----------------------------------------------------------------


def _canonical(raw):
    key = raw.strip().lower()
    return _ALIASES.get(key, key)


def merge_excitement(raw_label):
    """Map a raw label onto the four classes, folding excitement into happy."""
    key = _canonical(raw_label)
    if key in LABEL_INDEX:
        return key
    raise UnknownLabelError(f"label {raw_label!r} is not one of {', '.join(EMOTIONS)} or excitement")


def majority_label(annotations):
    """Strict-majority label after merging, or None when annotators split."""
    if not annotations:
        raise ValueError("need at least one annotation")
    merged = [_canonical(a) for a in annotations]
    winner, votes = Counter(merged).most_common(1)[0]
    if 2 * votes <= len(merged) or winner not in LABEL_INDEX:
        return None
    return winner


# -- acoustic features ------------------------------------------------------


def deltas(features, width=2):
    """Regression deltas over +-``width`` frames with edge frames repeated."""
    c = np.asarray(features, dtype=np.float64)
    T = c.shape[0]
    padded = np.concatenate([np.repeat(c[:1], width, 0), c, np.repeat(c[-1:], width, 0)])
    denom = 2.0 * sum(n * n for n in range(1, width + 1))
    out = np.zeros_like(c)
    for n in range(1, width + 1):
        out += n * (padded[width + n : width + n + T] - padded[width - n : width - n + T])
    return out / denom


def add_deltas(mfcc, width=2):
    """[c ; delta ; delta-delta] along the feature axis (40 -> 120 columns)."""
    c = np.asarray(mfcc, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 1:
        raise ValueError("expected a non-empty [T, d] feature matrix")
    d1 = deltas(c, width)
    return np.concatenate([c, d1, deltas(d1, width)], axis=1)


# -- text -------------------------------------------------------------------

_PUNCT = frozenset(string.punctuation)


def word_tokenize(transcript):
    """Lowercase whitespace split; leading/trailing punctuation characters
    become tokens of their own."""
    tokens = []
    for word in transcript.lower().split():
        lead = []
        while word and word[0] in _PUNCT:
            lead.append(word[0])
            word = word[1:]
        trail = []
        while word and word[-1] in _PUNCT:
            trail.append(word[-1])
            word = word[:-1]
        tokens.extend(lead)
        if word:
            tokens.append(word)
        tokens.extend(reversed(trail))
    return tokens


@dataclass
class Vocabulary:
    tokens: list = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the PAD and UNK entries")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")

    @classmethod
    def build(cls, transcripts, min_count=1):
        counts = Counter()
        for text in transcripts:
            counts.update(word_tokenize(text))
        words = sorted(w for w, n in counts.items() if n >= min_count)
        return cls([PAD_TOKEN, UNK_TOKEN] + words)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token):
        return self.index.get(token, UNK)

    def to_json(self):
        return json.dumps({"tokens": self.tokens}, ensure_ascii=False)

    @classmethod
    def from_json(cls, text):
        return cls(list(json.loads(text)["tokens"]))

    @property
    def digest(self):
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def tokenize(transcript, vocab):
    ids = [vocab.id(tok) for tok in word_tokenize(transcript)]
    return ids or [UNK]


def embed(tokens, table):
    """Embedding lookup; PAD positions give zero rows and no gradient."""
    return ad.take_rows(table, tokens, skip=PAD)


# -- padding ----------------------------------------------------------------


@dataclass
class PaddedUtterance:
    audio: np.ndarray
    audio_mask: np.ndarray
    tokens: np.ndarray
    text_mask: np.ndarray


def _pad(seq, length, fill):
    seq = np.asarray(seq)[:length]
    out = np.full((length,) + seq.shape[1:], fill, dtype=seq.dtype)
    out[: len(seq)] = seq
    mask = np.zeros(length, dtype=bool)
    mask[: len(seq)] = True
    return out, mask


def pad_truncate(u, vocab, max_audio_len=MAX_AUDIO_LEN, max_text_len=MAX_TEXT_LEN):
    """Keep the first ``max_*_len`` steps, zero/PAD-fill the remainder."""
    audio, amask = _pad(u.audio, max_audio_len, 0.0)
    tokens, tmask = _pad(np.asarray(tokenize(u.transcript, vocab), dtype=np.int64), max_text_len, PAD)
    return PaddedUtterance(audio, amask, tokens, tmask)


@dataclass
class Batch:
    audio: np.ndarray  # [B, T_a, d]
    audio_mask: np.ndarray
    prosody: np.ndarray  # [B, d_p]
    tokens: np.ndarray  # [B, T_t]
    text_mask: np.ndarray

    def __len__(self):
        return self.audio.shape[0]


def collate(utterances, vocab, max_audio_len=MAX_AUDIO_LEN, max_text_len=MAX_TEXT_LEN):
    """Pad a group of utterances to the longest (capped) length in the group.

    Identical to ``pad_truncate`` on the valid steps; trailing all-padding
    columns are simply not materialised.
    """
    token_lists = [tokenize(u.transcript, vocab)[:max_text_len] for u in utterances]
    ta = max(min(len(u.audio), max_audio_len) for u in utterances)
    tt = max(len(t) for t in token_lists)
    B = len(utterances)
    d = utterances[0].audio.shape[1]
    audio = np.zeros((B, ta, d))
    amask = np.zeros((B, ta), dtype=bool)
    tokens = np.full((B, tt), PAD, dtype=np.int64)
    tmask = np.zeros((B, tt), dtype=bool)
    for i, (u, toks) in enumerate(zip(utterances, token_lists)):
        frames = u.audio[:max_audio_len]
        audio[i, : len(frames)] = frames
        amask[i, : len(frames)] = True
        tokens[i, : len(toks)] = toks
        tmask[i, : len(toks)] = True
    prosody = np.stack([u.prosody for u in utterances]) if B else np.zeros((0, 0))
    return Batch(audio, amask, prosody, tokens, tmask)


# -- folds ------------------------------------------------------------------


@dataclass
class FoldSplit:
    fold_index: int
    train: tuple
    dev: tuple
    test: tuple


def make_folds(items, n_folds=10, seed=0, groups=None):
    """Shuffle once, cut into ``n_folds`` blocks; fold k tests on block k,
    develops on block k+1 and trains on the rest.

    ``items`` are ids or Utterances.  With ``groups`` every group lands in a
    single block (blocks are filled greedily, smallest first).
    """
    ids = [getattr(x, "id", x) for x in items]
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if n_folds < 3:
        raise ValueError("need at least 3 folds for a train/dev/test split")
    if len(ids) < n_folds:
        raise ValueError(f"{len(ids)} items cannot fill {n_folds} folds")
    rng = derive_rng(seed, "folds")
    if groups is None:
        order = rng.permutation(len(ids))
        blocks = [[ids[i] for i in part] for part in np.array_split(order, n_folds)]
    else:
        groups = list(groups)
        names = sorted(set(groups))
        if len(names) < n_folds:
            raise ValueError(f"{len(names)} groups cannot fill {n_folds} folds")
        members = {g: [] for g in names}
        for i, g in zip(ids, groups):
            members[g].append(i)
        blocks = [[] for _ in range(n_folds)]
        for gi in rng.permutation(len(names)):
            target = min(range(n_folds), key=lambda k: (len(blocks[k]), k))
            blocks[target].extend(members[names[gi]])
    splits = []
    for k in range(n_folds):
        dev_k = (k + 1) % n_folds
        train = [i for j, b in enumerate(blocks) if j not in (k, dev_k) for i in b]
        splits.append(FoldSplit(k, tuple(train), tuple(blocks[dev_k]), tuple(blocks[k])))
    return splits


def folds_to_json(splits):
    return json.dumps(
        [
            {"fold": s.fold_index, "train": list(s.train), "dev": list(s.dev), "test": list(s.test)}
            for s in splits
        ],
        indent=1,
    )


def folds_from_json(text):
    return [
        FoldSplit(r["fold"], tuple(r["train"]), tuple(r["dev"]), tuple(r["test"]))
        for r in json.loads(text)
    ]


# -- manifests --------------------------------------------------------------


@dataclass
class ManifestOptions:
    mfcc_dim: int = 40
    compute_deltas: bool = True
    d_p: int | None = None


@dataclass
class Rejected:
    id: str
    reason: str


def _read_csv(path, uid):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except OSError as exc:
        raise DataError(f"{uid}: cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{uid}: malformed numbers in {path}: {exc}") from exc


def read_manifest_records(path):
    """Header dict and record dicts from a JSON-lines manifest."""
    header, records = {}, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if "header" in rec and "id" not in rec:
                header.update(rec["header"])
            else:
                records.append(rec)
    return header, records


def load_manifest(path, options=None, rejected=None):
    """Load and validate every utterance a manifest references, sorted by id.

    Records whose label falls outside the four classes (or whose annotators
    do not agree) are skipped and, when ``rejected`` is a list, reported
    there.  Unknown label strings and bad feature files raise DataError.
    """
    options = options or ManifestOptions()
    path = Path(path)
    header, records = read_manifest_records(path)
    mfcc_dim = int(header.get("mfcc_dim", options.mfcc_dim))
    compute = bool(header.get("compute_deltas", options.compute_deltas))
    base = path.parent
    out = []
    for rec in records:
        uid = str(rec.get("id", ""))
        if not uid:
            raise DataError(f"{path}: record without id")
        if "annotations" in rec:
            for a in rec["annotations"]:
                _check_known(a, uid)
            label = majority_label(rec["annotations"])
            if label is None:
                _reject(rejected, uid, "no four-class majority")
                continue
        else:
            raw = rec.get("label")
            if raw is None:
                raise DataError(f"{uid}: record has neither label nor annotations")
            _check_known(raw, uid)
            if _canonical(raw) in EXCLUDED_LABELS:
                _reject(rejected, uid, f"excluded label {raw!r}")
                continue
            label = merge_excitement(raw)
        mfcc = _read_csv(base / rec["mfcc_path"], uid)
        if mfcc.shape[1] != mfcc_dim:
            raise DataError(f"{uid}: feature file has {mfcc.shape[1]} columns, expected {mfcc_dim}")
        audio = add_deltas(mfcc) if compute else mfcc
        if rec.get("prosody_path"):
            prosody = _read_csv(base / rec["prosody_path"], uid).reshape(-1)
        else:
            prosody = np.zeros(0)
        if options.d_p is not None and prosody.size != options.d_p:
            raise DataError(f"{uid}: prosody has {prosody.size} values, expected {options.d_p}")
        out.append(
            Utterance(
                id=uid,
                audio=audio,
                prosody=prosody,
                transcript=str(rec.get("transcript", "")),
                label=label,
                session=str(rec.get("session", "")),
            )
        )
    out.sort(key=lambda u: u.id)
    return out


def _check_known(raw, uid):
    key = _canonical(str(raw))
    if key not in LABEL_INDEX and key not in EXCLUDED_LABELS:
        raise UnknownLabelError(f"{uid}: unknown label {raw!r}")


def _reject(sink, uid, reason):
    if sink is not None:
        sink.append(Rejected(uid, reason))


def write_manifest(utterances, directory, name="manifest.jsonl"):
    """Write utterances as CSV feature files plus a manifest (120-dim audio)."""
    directory = Path(directory)
    (directory / "features").mkdir(parents=True, exist_ok=True)
    width = utterances[0].audio.shape[1] if utterances else 0
    lines = [json.dumps({"header": {"mfcc_dim": width, "compute_deltas": False}})]
    for u in utterances:
        mfcc_rel = f"features/{u.id}.csv"
        np.savetxt(directory / mfcc_rel, u.audio, delimiter=",", fmt="%.17g")
        rec = {"id": u.id, "mfcc_path": mfcc_rel, "transcript": u.transcript, "label": u.label, "session": u.session}
        if u.prosody.size:
            pros_rel = f"features/{u.id}.prosody.csv"
            np.savetxt(directory / pros_rel, u.prosody[None], delimiter=",", fmt="%.17g")
            rec["prosody_path"] = pros_rel
        lines.append(json.dumps(rec))
    target = directory / name
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target
