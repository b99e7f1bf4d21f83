from enum import Enum


class ShockFamily(str, Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"
    TWO_POINT = "two_point"
    DEGENERATE = "degenerate"


class CrossArmMode(str, Enum):
    IDENTICAL = "identical"
    INDEPENDENT = "independent"
    CORRELATED = "correlated"


class ShockModel(str, Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE_ETA = "multiplicative_eta"


class BootstrapMode(str, Enum):
    FULL_ENUMERATION = "enum"
    SAMPLED = "sampled"


class WeightLaw(str, Enum):
    RADEMACHER = "rademacher"


class Relation(str, Enum):
    EQ = "eq"
    GE = "ge"
    LE = "le"
    LT = "lt"
    WITHIN = "within"


class Target(str, Enum):
    UNBIASEDNESS = "unbiasedness"
    COND_VARIANCE = "cond_variance"
    UNCOND_VARIANCE = "uncond_variance"
    ROB_CONSERVATIVE = "rob_conservative"
    CLU_CONSERVATIVE = "clu_conservative"
    COR1_GAP = "cor1gap"
    COVERAGE = "coverage"
    CLT = "clt"
    BOOTSTRAP_SIZE = "bootstrap_size"
    SANDWICH = "sandwich"
    HOMOGENEOUS_SHOCKS = "homogeneous_shocks"
    ROB_UNDERCOVERAGE = "rob_undercoverage"


class OutputFormat(str, Enum):
    JSON = "json"
    TABLE = "table"
