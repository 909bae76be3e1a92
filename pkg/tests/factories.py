import itertools

from domains.exprfield.models import Domain
from domains.exprfield.services import make_field
from domains.flowcore.models import Metric, Region
from domains.flowcore.services import build_morse_datum, generic_datum
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import ComplexKind, GradedComplex

_label_seq = itertools.count(1)

# 기울인 2-토러스 높이 함수 (모스–스메일), 기울이지 않은 것은 안장점끼리 연결됨
TORUS_HEIGHT = "(2 + cos(2*pi*x2))*cos(2*pi*x1) + 0.1*sin(2*pi*x2)"
TORUS_UPRIGHT = "(2 + cos(2*pi*x2))*cos(2*pi*x1)"


def unique_label(prefix="g"):
    return f"{prefix}{next(_label_seq)}"


def make_complex(generators, differentials=None, kind=ComplexKind.CHAIN):
    """
    - generators: {차수: 생성원 개수 또는 라벨 리스트}
    - differentials: {차수: 행 리스트} (차수 k 에서 나가는 미분)
    """
    gens = {}
    for k, g in generators.items():
        gens[k] = tuple(unique_label(f"c{k}_") for _ in range(g)) if isinstance(g, int) else tuple(g)
    diffs = {}
    for k, rows in (differentials or {}).items():
        diffs[k] = IntMatrix.from_rows(rows, cols=len(gens.get(k, ())))
    return GradedComplex(gens, diffs, kind)


def circle_complex():
    """S¹ 의 최소 셀 복합체: 0-셀 하나, 1-셀 하나, ∂ = 0."""
    return make_complex({0: ["v"], 1: ["e"]}, {1: [[0]]})


def projective_plane_complex():
    """RP² 셀 복합체: H_0 = Z, H_1 = Z/2, H_2 = 0."""
    return make_complex({0: ["v"], 1: ["e"], 2: ["f"]}, {1: [[0]], 2: [[2]]})


def torus_datum(text=TORUS_HEIGHT, metric=None, **kwargs):
    domain = Domain.torus(2)
    return generic_datum(make_field(domain, text), metric or Metric.euclidean(2), **kwargs)


def interval_datum(text, bounds=(-2.0, 2.0), region=None, **kwargs):
    """1차원 박스 위 데이터. region 은 [[lo, hi]] 형태의 박스 하나."""
    domain = Domain.box([bounds])
    field_ = make_field(domain, text)
    N = Region.from_bounds(domain, [region]) if region is not None else None
    return build_morse_datum(field_, Metric.euclidean(1), N, **kwargs), N
