from gbe_nav.nn.core import (  # noqa
    DTYPE, LanguageEncoder, NonFiniteGradientError, ParamStore, grad_check, rmsprop_step
)
