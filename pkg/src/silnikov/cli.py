"""Command line front end.

Each command loads a model, runs one stage and writes its artifacts plus a
``manifest.json`` into the output directory::

    silnikov validate --out runs/m0
    silnikov fixed-points --ell 1..40 --out runs/m0
    silnikov horseshoe --ell 2..4 --seed 0 --out runs/m0
    silnikov shadow --word 01.0011 --ell 2 --out runs/m0

Exit codes: 0 success, 2 model validation failure, 3 solver
nonconvergence, 4 horseshoe verification failure, 5 input/output error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from ._kernels import BACKEND

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_HORSESHOE, EXIT_IO = 0, 2, 3, 4, 5
COMMANDS = ("validate", "fixed-points", "slab", "horseshoe", "shadow", "conjugacy", "sensitivity")
DEFAULT_ELL = {"fixed-points": "1..40", "slab": "2..4", "horseshoe": "2..4"}


@dataclass
class RunConfig:
    command: str
    model_path: str | None = None
    ell_range: tuple[int, int] = (2, 2)
    words: list[str] = field(default_factory=list)
    out_dir: str = "."
    format: str = "csv"
    seed: int = 0

    def check(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.command == "shadow" and not self.words:
            raise ValueError("shadow needs at least one --word")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        lo, hi = self.ell_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad ell range {lo}..{hi}")

    @property
    def ells(self) -> range:
        return range(self.ell_range[0], self.ell_range[1] + 1)


class _Failure(Exception):
    def __init__(self, code: int, stage: str, exc: BaseException | str):
        self.code = code
        self.record = {"stage": stage, "error_class": type(exc).__name__ if isinstance(exc, BaseException) else "Failure",
                       "message": str(exc), "exit_code": code}
        super().__init__(self.record["message"])


def parse_ell(text: str) -> tuple[int, int]:
    if ".." in text:
        a, b = text.split("..", 1)
        return int(a), int(b)
    return int(text), int(text)


class Runner:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.outputs: list[str] = []
        self.failures: list[dict] = []
        self.results: dict = {}
        self.spec = None
        self.model_hash = None

    # -- helpers -------------------------------------------------------------

    def _write(self, name: str, text: str) -> None:
        try:
            (self.out / name).write_text(text)
        except OSError as exc:
            raise _Failure(EXIT_IO, f"write {name}", exc) from None
        self.outputs.append(name)

    def _table(self, stem: str, header, rows) -> None:
        from .io import dumps_csv, dumps_json

        if self.cfg.format == "csv":
            self._write(stem + ".csv", dumps_csv(header, rows))
        else:
            self._write(stem + ".json", dumps_json([dict(zip(header, r)) for r in rows]))

    def _load(self):
        from .io import dumps_json
        from .model import StructuralError, default_model, load_model

        try:
            self.spec = load_model(self.cfg.model_path) if self.cfg.model_path else default_model()
        except OSError as exc:
            raise _Failure(EXIT_IO, "load model", exc) from None
        except StructuralError as exc:
            raise _Failure(EXIT_VALIDATION, "load model", exc) from None
        canon = dumps_json(self.spec.to_dict())
        self.model_hash = hashlib.sha256(canon.encode()).hexdigest()

    def _cm_rates(self, ell: int):
        from .horseshoe import verify_conley_moser

        rep = verify_conley_moser(ell, self.spec, seed=self.cfg.seed)
        if not rep.passed:
            raise _Failure(EXIT_HORSESHOE, f"conley_moser ell={ell}", f"verdict {rep.verdict}")
        return rep

    # -- commands ------------------------------------------------------------

    def validate(self) -> int:
        from .io import dumps_json
        from .model import validate_model

        rep = validate_model(self.spec)
        self._write("validation.json", dumps_json(rep.to_dict()))
        self.results["validation"] = {"passed": rep.passed, "failed": rep.failed(),
                                      "skipped": rep.skipped()}
        if not rep.passed:
            self.failures.append({"stage": "validate", "error_class": "ValidationFailure",
                                  "message": ", ".join(rep.failed()), "exit_code": EXIT_VALIDATION})
            return EXIT_VALIDATION
        return EXIT_OK

    def fixed_points(self) -> int:
        from .fixed_points import LeadingOrderError, family_rows, fixed_point_family

        try:
            fam = fixed_point_family(self.cfg.ells, self.spec)
        except LeadingOrderError as exc:
            raise _Failure(EXIT_VALIDATION, "fixed-points", exc) from None
        header, rows = family_rows(fam, self.spec)
        self._table("fixed_points", header, rows)
        bad = [r.ell for r in fam if not r.converged]
        self.results["fixed_points"] = {"count": len(fam), "converged_tail_start": fam.ell0, "nonconverged": bad}
        for r in fam:
            if not r.converged:
                self.failures.append({"stage": f"fixed_point ell={r.ell}", "error_class": "NonConvergence",
                                      "message": r.message, "exit_code": EXIT_SOLVER})
        return EXIT_SOLVER if bad else EXIT_OK

    def slab(self) -> int:
        from .horseshoe import ResidencyCount, SlabUnavailable, build_slab
        from .io import dumps_json

        code = EXIT_OK
        for ell in self.cfg.ells:
            try:
                s = build_slab(ell, self.spec)
            except SlabUnavailable as exc:
                self.failures.append(_Failure(EXIT_SOLVER, f"slab ell={ell}", exc).record)
                code = max(code, EXIT_SOLVER)
                continue
            except ResidencyCount as exc:
                self.failures.append(_Failure(EXIT_HORSESHOE, f"slab ell={ell}", exc).record)
                code = max(code, EXIT_HORSESHOE)
                continue
            self._write(f"slab_{ell}.json", dumps_json(s.to_dict()))
        return code

    def horseshoe(self) -> int:
        from .horseshoe import verify_conley_moser
        from .io import dumps_json

        code = EXIT_OK
        verdicts = {}
        for ell in self.cfg.ells:
            rep = verify_conley_moser(ell, self.spec, seed=self.cfg.seed)
            self._write(f"conley_moser_{ell}.json", dumps_json(rep.to_dict()))
            verdicts[str(ell)] = rep.verdict
            if not rep.passed:
                self.failures.append({"stage": f"conley_moser ell={ell}", "error_class": "HorseshoeVerification",
                                      "message": f"verdict {rep.verdict}", "exit_code": EXIT_HORSESHOE})
                code = EXIT_HORSESHOE
        self.results["conley_moser"] = verdicts
        return code

    def _words(self):
        from .horseshoe import SymbolWord

        try:
            return [SymbolWord.parse(w) for w in self.cfg.words]
        except ValueError as exc:
            raise _Failure(EXIT_VALIDATION, "parse word", exc) from None

    def shadow(self) -> int:
        from .horseshoe import EmptyIntersection, shadow_words

        words = self._words()
        header = ["ell", "word", "verified", "forward_check", "backward_check", "max_drift", "residual"]
        header += [f"w{i}" for i in range(self.spec.n0)] + [f"q{i}" for i in range(self.spec.n0)]
        rows = []
        code = EXIT_OK
        for ell in self.cfg.ells:
            self._cm_rates(ell)
            try:
                certs = shadow_words(words, ell, self.spec)
            except EmptyIntersection as exc:
                self.failures.append(_Failure(EXIT_HORSESHOE, f"shadow ell={ell}", exc).record)
                code = EXIT_HORSESHOE
                continue
            for c in sorted(certs, key=lambda c: str(c.word)):
                rows.append([ell, str(c.word), int(c.verified), c.forward_check, c.backward_check, c.max_drift,
                             c.residual] + [float(v) for v in c.point.as_array()] + [float(v) for v in c.chart_point])
                if not c.verified:
                    code = EXIT_HORSESHOE
                    self.failures.append({"stage": f"shadow ell={ell} word={c.word}", "error_class": "ItineraryMismatch",
                                          "message": f"forward {c.forward_check}/{c.word.j}, backward "
                                                     f"{c.backward_check}/{c.word.k}", "exit_code": EXIT_HORSESHOE})
        self._table("certificates", header, rows)
        return code

    def conjugacy(self) -> int:
        from .horseshoe import EmptyIntersection, all_words, check_conjugacy_batch
        from .io import dumps_json

        words = self._words() or all_words(2, 3)
        out = []
        code = EXIT_OK
        for ell in self.cfg.ells:
            rep = self._cm_rates(ell)
            try:
                reps = check_conjugacy_batch(words, ell, self.spec, rep.mu_u, rep.mu_s)
            except EmptyIntersection as exc:
                self.failures.append(_Failure(EXIT_HORSESHOE, f"conjugacy ell={ell}", exc).record)
                code = EXIT_HORSESHOE
                continue
            reps.sort(key=lambda r: r.word)
            ok = all(r.passed for r in reps)
            out.append({"ell": ell, "mu_u": rep.mu_u, "mu_s": rep.mu_s, "passed": ok,
                        "max_distance": max(r.distance for r in reps), "words": [r.to_dict() for r in reps]})
            if not ok:
                code = EXIT_HORSESHOE
                self.failures.append({"stage": f"conjugacy ell={ell}", "error_class": "ConjugacyMismatch",
                                      "message": "distance above tolerance", "exit_code": EXIT_HORSESHOE})
        self._write("conjugacy.json", dumps_json(out))
        return code

    def sensitivity(self) -> int:
        from .horseshoe import EmptyIntersection, SymbolWord, sensitivity

        base = SymbolWord.parse(self.cfg.words[0]) if self.cfg.words else None
        header = ["ell", "j", "word_a", "word_b", "delta", "separation", "separation_step", "strip_gap"]
        rows = []
        code = EXIT_OK
        for ell in self.cfg.ells:
            rep = self._cm_rates(ell)
            try:
                res = sensitivity(ell, self.spec, base=base)
            except (EmptyIntersection, IndexError) as exc:
                self.failures.append(_Failure(EXIT_HORSESHOE, f"sensitivity ell={ell}", exc).record)
                code = EXIT_HORSESHOE
                continue
            for r in res:
                rows.append([ell, r.j, r.word_a, r.word_b, r.delta, r.separation, r.separation_step, rep.strip_gap])
        self._table("sensitivity", header, rows)
        return code

    # -- driver --------------------------------------------------------------

    def run(self) -> int:
        try:
            self.cfg.check()
        except ValueError as exc:
            self.failures.append(_Failure(EXIT_VALIDATION, "config", exc).record)
            return self._finish(EXIT_VALIDATION)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"error: cannot create {self.out}: {exc}", file=sys.stderr)
            return EXIT_IO
        try:
            self._load()
            code = getattr(self, self.cfg.command.replace("-", "_"))()
        except _Failure as f:
            self.failures.append(f.record)
            code = f.code
        return self._finish(code)

    def _finish(self, code: int) -> int:
        from .io import dumps_json

        manifest = {
            "tool": "silnikov",
            "version": __version__,
            "flight_backend": BACKEND,
            "command": self.cfg.command,
            "config": {"model_path": self.cfg.model_path, "ell_range": list(self.cfg.ell_range),
                       "words": list(self.cfg.words), "format": self.cfg.format, "seed": self.cfg.seed},
            "model_sha256": self.model_hash,
            "tolerances": None if self.spec is None else self.spec.to_dict().get("tolerances"),
            "rng": {"generator": "numpy.random.default_rng", "seed": self.cfg.seed},
            "results": self.results,
            "outputs": {},
            "failures": self.failures,
            "exit_code": code,
        }
        for name in sorted(self.outputs):
            manifest["outputs"][name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        try:
            (self.out / "manifest.json").write_text(dumps_json(manifest))
        except OSError as exc:
            print(f"error: cannot write manifest: {exc}", file=sys.stderr)
            return EXIT_IO
        for f in self.failures:
            print(f"{f['stage']}: {f['error_class']}: {f['message']}", file=sys.stderr)
        return code


def run(cfg: RunConfig) -> int:
    return Runner(cfg).run()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="silnikov", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--model", dest="model_path", default=None, help="model JSON (default: shipped M0)")
        p.add_argument("--ell", default=DEFAULT_ELL.get(name, "2"), help="index or range a..b")
        p.add_argument("--word", dest="words", action="append", default=[],
                       help="symbol word such as 01.0011 (repeatable)")
        p.add_argument("--out", dest="out_dir", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ell = parse_ell(args.ell)
    except ValueError:
        print(f"error: bad --ell {args.ell!r}", file=sys.stderr)
        return EXIT_VALIDATION
    cfg = RunConfig(args.command, args.model_path, ell, args.words, args.out_dir, args.format, args.seed)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
