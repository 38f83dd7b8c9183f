from dijay import module

from .config import RuntimeConfig
from .usecases import (
    ComputeInvariantUsecase,
    InvariantService,
    SelftestUsecase,
    VerifyFluxUsecase,
)

providers = [
    RuntimeConfig,
    InvariantService,
    ComputeInvariantUsecase,
    VerifyFluxUsecase,
    SelftestUsecase,
]


@module(providers=providers, exports=providers)
class HiberryModule:
    pass
