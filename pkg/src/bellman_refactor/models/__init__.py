from .bankruptcy import BankruptcyModel, build_bankruptcy
from .config import ConfigError, LoadedModel, build_from_config, load_config, load_model
from .finite import (FiniteMdp, build_finite, expected_value_factorization,
                     identity_factorization, qfactor_factorization, random_mdp, single_state)
from .risk import (CounterexampleModel, RiskSensitiveModel, build_counterexample,
                   build_risk_sensitive, nonmonotone_factorization)
from .robust import RobustControlModel, build_robust, expected_value_limit, robust_savings
from .stopping import (StoppingModel, asset_sale, build_stopping, continuous_asset_sale,
                       job_search)
