"""Case/tissue subset predicates used for aggregation and subset rankings."""
from __future__ import annotations

from dataclasses import dataclass

from .volume_io import (CaseMetadata, Domain, TissueLabel, parse_domain, parse_institution,
                        parse_sr_method)


@dataclass(frozen=True)
class SubsetFilter:
    """Conjunction of optional predicates; all ``None`` selects everything."""

    institutions: frozenset[str] | None = None
    domain: Domain | None = None
    pathology: str | None = None
    quality: frozenset[int] | None = None
    sr_methods: frozenset[str] | None = None
    tissues: frozenset[TissueLabel] | None = None

    def match_case(self, meta: CaseMetadata) -> bool:
        if self.institutions is not None and meta.institution not in self.institutions:
            return False
        if self.domain is not None and meta.domain != self.domain:
            return False
        if self.pathology is not None and meta.pathology != self.pathology:
            return False
        if self.quality is not None and meta.quality not in self.quality:
            return False
        if self.sr_methods is not None and meta.sr_method not in self.sr_methods:
            return False
        return True

    def match_tissue(self, tissue) -> bool:
        return self.tissues is None or TissueLabel(int(tissue)) in self.tissues

    def describe(self) -> str:
        parts = []
        if self.institutions is not None:
            parts.append("institution=" + ",".join(sorted(self.institutions)))
        if self.domain is not None:
            parts.append("domain=" + self.domain.value)
        if self.pathology is not None:
            parts.append("pathology=" + self.pathology)
        if self.quality is not None:
            parts.append("quality=" + ",".join(map(str, sorted(self.quality))))
        if self.sr_methods is not None:
            parts.append("sr_method=" + ",".join(sorted(self.sr_methods)))
        if self.tissues is not None:
            parts.append("tissue=" + ",".join(t.name for t in sorted(self.tissues)))
        return ";".join(parts) or "all"

    def slug(self) -> str:
        """Filesystem-safe name, e.g. ``domain-out_of_domain``."""
        d = self.describe()
        return d.replace("=", "-").replace(";", "__").replace(",", "+")

    @classmethod
    def parse(cls, expr: str | None) -> "SubsetFilter":
        """Parse ``key=value[,value...][;key=value...]``; empty or "all" selects everything."""
        if expr is None or expr.strip() in ("", "all"):
            return cls()
        kw = {}
        for clause in expr.split(";"):
            if not clause.strip():
                continue
            key, sep, val = clause.partition("=")
            if not sep:
                raise ValueError(f"subset clause {clause!r} is not key=value")
            key = key.strip().lower()
            vals = [v.strip() for v in val.split(",") if v.strip()]
            if not vals:
                raise ValueError(f"subset clause {clause!r} has no value")
            if key == "institution":
                kw["institutions"] = frozenset(parse_institution(v) for v in vals)
            elif key == "domain":
                if len(vals) != 1:
                    raise ValueError("domain takes one value")
                kw["domain"] = parse_domain(vals[0])
            elif key == "pathology":
                if len(vals) != 1 or vals[0].lower() not in ("normal", "pathological"):
                    raise ValueError(f"bad pathology {val!r}")
                kw["pathology"] = vals[0].lower()
            elif key == "quality":
                q = frozenset(int(v) for v in vals)
                if not q <= {1, 2, 3}:
                    raise ValueError(f"quality must be in 1..3, got {sorted(q)}")
                kw["quality"] = q
            elif key in ("sr_method", "sr"):
                kw["sr_methods"] = frozenset(parse_sr_method(v) for v in vals)
            elif key in ("tissue", "label"):
                tissues = frozenset(TissueLabel.parse(v) for v in vals)
                if TissueLabel.background in tissues:
                    raise ValueError("background is not a scored tissue")
                kw["tissues"] = tissues
            else:
                raise ValueError(f"unknown subset key {key!r}")
        return cls(**kw)
