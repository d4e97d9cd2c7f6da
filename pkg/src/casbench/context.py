"""Problem registry, context packs, system-prompt rendering and token estimates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

PROBLEM_IDS = ("R2Fs", "sRFs", "sRFv", "sRFt", "sRMs", "sRMt", "sRi2Ms", "sRi2Fs", "sRi2Ft")
PACK_IDS = ("10ex", "3broad", "3tailored", "instruction")
MANIFEST = "manifest.toml"


class Background(str, Enum):
    COSMOLOGICAL = "cosmological"
    FLAT = "flat"


class Sector(str, Enum):
    SCALAR = "scalar"
    VECTOR = "vector"
    TENSOR = "tensor"


class UnknownProblem(KeyError):
    pass


class UnknownPack(KeyError):
    pass


@dataclass(frozen=True)
class Problem:
    id: str
    statement: str
    background: Background
    sector: Sector


def data_dir() -> Path:
    return Path(resources.files("casbench") / "data")


def _load_registry():
    with open(data_dir() / "problems.toml", "rb") as fh:
        rows = tomllib.load(fh)["problem"]
    reg = {}
    for row in rows:
        p = Problem(row["id"], row["statement"], Background(row["background"]), Sector(row["sector"]))
        reg[p.id] = p
    return reg


_REGISTRY: dict[str, Problem] | None = None


def problems() -> list[Problem]:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _load_registry()
    return [_REGISTRY[pid] for pid in PROBLEM_IDS]


def get_problem(problem_id: str) -> Problem:
    for p in problems():
        if p.id == problem_id:
            return p
    raise UnknownProblem(problem_id)


# -- packs


class PackError(Exception):
    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors if errors is not None else [self]


class ManifestMissing(PackError):
    pass


class DocumentMissing(PackError):
    def __init__(self, title, path=None):
        super().__init__(f"document {title!r} missing" + (f" ({path})" if path else ""))
        self.title = title


class EncodingError(PackError):
    pass


class PackInvalid(PackError):
    """Several validation problems at once; see ``errors``."""


@dataclass
class Document:
    title: str
    body: str
    placeholder: bool = False


@dataclass
class ContextPack:
    id: str
    documents: list[Document] = field(default_factory=list)
    preamble: str | None = None
    declared_token_size: int | None = None

    @property
    def placeholders(self):
        return [d for d in self.documents if d.placeholder]


def _read_text(path: Path, label, errors):
    if not path.is_file():
        errors.append(DocumentMissing(label, path))
        return None
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        errors.append(EncodingError(f"{path}: not valid UTF-8 ({e.reason} at byte {e.start})"))
        return None


def load_pack(path) -> ContextPack:
    """Load a pack directory. Problems are collected and raised together."""
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.is_file():
        raise ManifestMissing(f"no {MANIFEST} in {path}")
    errors: list[PackError] = []
    try:
        manifest = tomllib.loads(manifest_path.read_bytes().decode("utf-8"))
    except UnicodeDecodeError as e:
        raise EncodingError(f"{manifest_path}: not valid UTF-8") from e
    except tomllib.TOMLDecodeError as e:
        raise PackInvalid(f"{manifest_path}: {e}") from e

    pack = ContextPack(manifest.get("id", path.name), declared_token_size=manifest.get("declared_token_size"))
    if manifest.get("preamble"):
        pack.preamble = _read_text(path / manifest["preamble"], "preamble", errors)
    for n, entry in enumerate(manifest.get("documents", []), 1):
        title = entry.get("title")
        fname = entry.get("file")
        if not title or not fname:
            errors.append(PackInvalid(f"document entry {n} needs both title and file"))
            continue
        body = _read_text(path / fname, title, errors)
        if body is not None:
            pack.documents.append(Document(title, body, bool(entry.get("placeholder", False))))
    if not manifest.get("documents") and not manifest.get("preamble"):
        errors.append(PackInvalid(f"{manifest_path}: lists neither documents nor a preamble"))

    if len(errors) == 1:
        raise errors[0]
    if errors:
        raise PackInvalid(f"pack {path} has {len(errors)} problems: " + "; ".join(map(str, errors)), errors)
    if pack.placeholders:
        log.warning(
            "pack %s: %d of %d documents are placeholders; reproducing the published runs needs the full pack",
            pack.id, len(pack.placeholders), len(pack.documents),
        )
    return pack


def builtin_packs_dir() -> Path:
    return data_dir() / "packs"


def load_named_pack(pack_id: str, packs_dir=None) -> ContextPack:
    root = Path(packs_dir) if packs_dir else builtin_packs_dir()
    if not (root / pack_id).is_dir():
        raise UnknownPack(pack_id)
    return load_pack(root / pack_id)


def available_packs(packs_dir=None) -> list[str]:
    root = Path(packs_dir) if packs_dir else builtin_packs_dir()
    found = sorted(p.name for p in root.iterdir() if (p / MANIFEST).is_file()) if root.is_dir() else []
    # the published packs first, in reporting order
    return [p for p in PACK_IDS if p in found] + [p for p in found if p not in PACK_IDS]


def render_system_prompt(pack: ContextPack) -> str:
    blocks = []
    if pack.preamble:
        blocks.append(pack.preamble.rstrip("\n"))
    for doc in pack.documents:
        blocks.append(f"=== {doc.title} ===\n" + doc.body.rstrip("\n"))
    return "\n\n".join(blocks)


# -- token estimates


class TokenMethod(str, Enum):
    BYTES_DIV_4 = "bytes_div_4"
    PROVIDER_REPORTED = "provider_reported"


@dataclass(frozen=True)
class TokenEstimate:
    estimated_tokens: int
    method: TokenMethod


def estimate_tokens(text: str) -> TokenEstimate:
    return TokenEstimate(math.ceil(len(text.encode("utf-8")) / 4), TokenMethod.BYTES_DIV_4)


def reported_tokens(usage) -> TokenEstimate:
    """Estimate taken from the provider's count of the first turn's input."""
    return TokenEstimate(usage.input_tokens, TokenMethod.PROVIDER_REPORTED)
