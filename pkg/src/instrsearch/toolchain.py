"""Driver for the external Java compiler and class-file disassembler."""

from __future__ import annotations

import hashlib
import os
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InstrSearchError

JAVAC_ENV = "INSTRSEARCH_JAVAC"
JAVAP_ENV = "INSTRSEARCH_JAVAP"
WRAPPER_CLASS = "Snippet"

_TYPE_DECL = re.compile(r"^\s*(?:(?:public|final|abstract)\s+)*(?:class|interface|enum)\s+(\w+)", re.M)


class ToolError(InstrSearchError):
    pass


class ToolMissing(ToolError):
    pass


class CompileFailed(ToolError):
    def __init__(self, diagnostics: str):
        super().__init__("compilation failed:\n" + diagnostics)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ToolConfig:
    javac: str = "javac"
    javap: str = "javap"
    timeout: float = 120.0
    javac_args: tuple[str, ...] = field(default=("-g", "-nowarn"))
    javap_args: tuple[str, ...] = field(default=("-c", "-l", "-p"))

    @classmethod
    def from_env(cls, env=None) -> "ToolConfig":
        env = os.environ if env is None else env
        return cls(env.get(JAVAC_ENV, "javac"), env.get(JAVAP_ENV, "javap"))

    def resolve(self) -> tuple[str, str]:
        out = []
        for tool in (self.javac, self.javap):
            path = shutil.which(tool)
            if path is None:
                raise ToolMissing(f"{tool!r} not found (set {JAVAC_ENV} / {JAVAP_ENV})")
            out.append(path)
        return out[0], out[1]


def wrap_source(code: str) -> tuple[str, str]:
    """``(class name, compilable source)``; a bare method is placed inside a synthetic class."""
    m = _TYPE_DECL.search(code)
    if m:
        return m.group(1), code
    body = "\n".join("    " + line for line in code.strip().splitlines())
    return WRAPPER_CLASS, f"import java.util.*;\n\npublic class {WRAPPER_CLASS} {{\n{body}\n}}\n"


def _run(cmd: list[str], cwd: Path, timeout: float) -> subprocess.CompletedProcess:
    return subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=timeout)


def disassemble_external(code: str, work_dir, tool_config: ToolConfig | None = None) -> str:
    """Compile ``code`` with debug info and return the disassembler's text.

    Results are cached in ``work_dir`` under the hash of the wrapped source,
    so the same code is never compiled twice.
    """
    tools = tool_config or ToolConfig.from_env()
    class_name, source = wrap_source(code)
    digest = hashlib.sha256(source.encode("utf-8")).hexdigest()
    work = Path(work_dir)
    cached = work / "cache" / f"{digest}.javap"
    if cached.exists():
        return cached.read_text(encoding="utf-8")

    javac, javap = tools.resolve()
    build = work / "build" / digest
    classes = build / "classes"
    classes.mkdir(parents=True, exist_ok=True)
    src_file = build / f"{class_name}.java"
    src_file.write_text(source, encoding="utf-8")

    res = _run([javac, *tools.javac_args, "-d", str(classes), str(src_file)], build, tools.timeout)
    if res.returncode != 0:
        raise CompileFailed((res.stderr or res.stdout).strip())
    res = _run([javap, *tools.javap_args, "-cp", str(classes), class_name], build, tools.timeout)
    if res.returncode != 0:
        raise ToolError(f"disassembler failed: {(res.stderr or res.stdout).strip()}")

    cached.parent.mkdir(parents=True, exist_ok=True)
    tmp = cached.with_suffix(".tmp")
    tmp.write_text(res.stdout, encoding="utf-8")
    os.replace(tmp, cached)
    return res.stdout
