import pytest

from domains.conley.models import IsolationConfig
from domains.exprfield.models import Domain
from domains.exprfield.services import make_field
from domains.flowcore.models import FlowConfig, Metric, Region
from domains.moduli.models import ShootingConfig

from tests.factories import TORUS_HEIGHT, TORUS_UPRIGHT


# ─────────────────────────────────────────────────────────────
# 도메인
# ─────────────────────────────────────────────────────────────
@pytest.fixture
def circle():
    return Domain.torus(1)


@pytest.fixture
def torus2():
    return Domain.torus(2)


@pytest.fixture
def line():
    """[−2, 2] 박스 (고립 근방 N = [−1, 1] 을 안쪽에 둔다)"""
    return Domain.box([[-2.0, 2.0]])


@pytest.fixture
def square():
    return Domain.box([[-1.0, 1.0], [-1.0, 1.0]])


@pytest.fixture
def unit_interval(line):
    return Region.from_bounds(line, [[[-1.0, 1.0]]])


@pytest.fixture
def inner_square(square):
    return Region.from_bounds(square, [[[-0.5, 0.5], [-0.5, 0.5]]])


# ─────────────────────────────────────────────────────────────
# 스칼라장
# ─────────────────────────────────────────────────────────────
@pytest.fixture
def height(torus2):
    return make_field(torus2, TORUS_HEIGHT)


@pytest.fixture
def upright(torus2):
    return make_field(torus2, TORUS_UPRIGHT)


@pytest.fixture
def circle_cos(circle):
    return make_field(circle, "cos(2*pi*x1)")


@pytest.fixture
def well(line):
    return make_field(line, "x1^2")


@pytest.fixture
def saddle(square):
    return make_field(square, "x2^2 - x1^2")


@pytest.fixture
def euclid2():
    return Metric.euclidean(2)


# ─────────────────────────────────────────────────────────────
# 설정 (테스트용으로 격자를 줄여 빠르게)
# ─────────────────────────────────────────────────────────────
@pytest.fixture
def flow_config():
    return FlowConfig()


@pytest.fixture
def shooting():
    return ShootingConfig()


@pytest.fixture
def isolation():
    """
    경계 간격/내부 격자를 줄인 고립 설정
    """
    return IsolationConfig(boundary_spacing=0.05, interior_per_axis=11, lyapunov_per_axis=21, r_grid=6, r_max=5.0)
