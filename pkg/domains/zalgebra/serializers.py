"""
JSON schema for complexes and maps.

    {
      "kind": "chain",
      "degrees": {
        "0": {"generators": ["p0"], "differential": []},
        "1": {"generators": ["p1"], "differential": [[0]]}
      }
    }

"differential" is the row-major matrix leaving that degree. An empty list stands for a
matrix with zero rows.
"""
from __future__ import annotations

from typing import Dict, List

from pydantic import BaseModel, Field, model_validator

from .matrices import IntMatrix
from .models import ComplexKind, GradedComplex, GradedIntMap


class DegreeSchema(BaseModel):
    generators: List[str] = Field(default_factory=list)
    differential: List[List[int]] = Field(default_factory=list)


class ComplexSchema(BaseModel):
    kind: ComplexKind = ComplexKind.CHAIN
    degrees: Dict[int, DegreeSchema] = Field(default_factory=dict)

    def to_complex(self) -> GradedComplex:
        gens = {k: tuple(d.generators) for k, d in self.degrees.items()}
        # 빈 리스트는 0 행렬 (GradedComplex 기본값) 로 둔다
        diffs: Dict[int, IntMatrix] = {
            k: IntMatrix.from_rows(d.differential, cols=len(d.generators))
            for k, d in self.degrees.items()
            if d.differential
        }
        return GradedComplex(gens, diffs, self.kind)

    @classmethod
    def from_complex(cls, c: GradedComplex) -> "ComplexSchema":
        return cls(
            kind=c.kind,
            degrees={
                k: DegreeSchema(generators=list(c.labels(k)), differential=c.differential(k).to_rows())
                for k in c.degrees
            },
        )


class ChainMapSchema(BaseModel):
    source: ComplexSchema
    target: ComplexSchema
    shift: int = 0
    matrices: Dict[int, List[List[int]]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _known_degrees(self) -> "ChainMapSchema":
        unknown = set(self.matrices) - set(self.source.degrees)
        if unknown:
            raise ValueError(f"소스에 없는 차수의 행렬: {sorted(unknown)}")
        return self

    def to_map(self) -> GradedIntMap:
        src, tgt = self.source.to_complex(), self.target.to_complex()
        mats = {
            k: IntMatrix.from_rows(rows, cols=src.rank(k)) if rows else IntMatrix.zeros(0, src.rank(k))
            for k, rows in self.matrices.items()
        }
        return GradedIntMap(src, tgt, mats, self.shift)

    @classmethod
    def from_map(cls, m: GradedIntMap) -> "ChainMapSchema":
        return cls(
            source=ComplexSchema.from_complex(m.source),
            target=ComplexSchema.from_complex(m.target),
            shift=m.shift,
            matrices={k: m.matrix(k).to_rows() for k in m.source.degrees},
        )
