"""
Run configuration for the command line.

Every setting resolves as: explicit flag, then the JSON config file, then the
AUCTIONLAB_* environment variables, then the code default.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from .bilevel import FeeBase, ObjectiveKind, ObjectiveSpec, DEFAULT_P_GRID, default_a_grid
from .engine import EstimatorConfig
from .exceptions import ValidationError
from .model import (
    AuctionParams, Beliefs, ClosingRule, FeeFamily, FeeSchedule, load_params,
    params_from_dict, preset,
)
from .trader import DEFAULT_GRID, MuGrid

logger = logging.getLogger(__name__)

DEFAULT_STOCK = 'apple'
DEFAULT_OUT = 'out'
DEFAULT_RHOS = (0.1, 0.2, 0.5, 0.8, 1.0, 1.2)

_DOCUMENT_KEYS = {
    'params', 'stock', 'beliefs', 'fee', 'randomization', 'estimator', 'out',
    'cache_dir', 'rho', 'grid', 'objective', 'objective_rho', 'fee_base',
    'families', 'a_grid', 'p_grid',
}


def resolve_beliefs(spec: str, params: AuctionParams) -> Beliefs:
    """perfect | minus_sigma | plus_sigma | explicit:<mu_g_star>,<mu_g_mm>"""
    text = spec.strip().lower()
    if text == 'perfect':
        return Beliefs.perfect(params)
    if text == 'minus_sigma':
        return Beliefs.shifted(params, -1.0)
    if text == 'plus_sigma':
        return Beliefs.shifted(params, 1.0)
    if text.startswith('explicit:'):
        try:
            star, mm = (float(v) for v in text[len('explicit:'):].split(','))
        except ValueError:
            raise ValidationError(f"Invalid explicit beliefs: {spec!r}", field='beliefs')
        return Beliefs(star, mm)
    raise ValidationError(f"Unknown beliefs case: {spec!r}", field='beliefs')


def load_document(path: str) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Config file is not valid JSON: {e}")
    if not isinstance(document, dict):
        raise ValidationError("Config file must hold a JSON object")
    unknown = set(document) - _DOCUMENT_KEYS
    if unknown:
        name = sorted(unknown)[0]
        raise ValidationError(f"Unknown config field: {name}", field=name)
    return document


def _parse_floats(value: Any, field: str) -> Tuple[float, ...]:
    """A list, or a comma string of numbers and start:stop:step ranges."""
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [v for v in str(value).split(',') if v.strip()]
    numbers = []
    try:
        for item in items:
            if isinstance(item, str) and ':' in item:
                start, stop, step = (float(v) for v in item.split(':'))
                count = int(round((stop - start) / step)) + 1
                numbers.extend(round(start + i * step, 12) for i in range(count))
            else:
                numbers.append(float(item))
    except ValueError:
        raise ValidationError(f"Invalid number list for {field}: {value!r}", field=field)
    return tuple(numbers)


def _first(*values: Any) -> Any:
    for value in values:
        if value is not None:
            return value
    return None


@dataclass(frozen=True)
class RunConfig:
    params: AuctionParams
    beliefs: str = 'perfect'
    fee: FeeSchedule = FeeSchedule.zero()
    randomization: str = 'p=0'
    estimator: EstimatorConfig = EstimatorConfig()
    out_dir: str = DEFAULT_OUT
    cache_dir: Optional[str] = None
    rhos: Tuple[float, ...] = DEFAULT_RHOS
    grid: MuGrid = DEFAULT_GRID
    objective: ObjectiveSpec = ObjectiveSpec()
    families: Tuple[FeeFamily, ...] = (FeeFamily.LINEAR, FeeFamily.SQUARE)
    a_grid: Optional[Tuple[float, ...]] = None
    p_grid: Tuple[float, ...] = DEFAULT_P_GRID

    @property
    def seed(self) -> int:
        return self.estimator.seed

    @property
    def trader_beliefs(self) -> Beliefs:
        return resolve_beliefs(self.beliefs, self.params)

    @property
    def closing(self) -> ClosingRule:
        rule = ClosingRule.parse(self.randomization, self.params.horizon)
        rule.validate_against(self.params)
        return rule

    @property
    def coefficients(self) -> Tuple[float, ...]:
        return self.a_grid if self.a_grid is not None else default_a_grid(self.objective.kind)

    def validate(self) -> None:
        resolve_beliefs(self.beliefs, self.params)
        self.closing.validate_against(self.params)

    @classmethod
    def resolve(cls, flags: Dict[str, Any], config_path: Optional[str] = None) -> 'RunConfig':
        """Merge ``flags`` (None means unset) over the config file and the environment."""
        document = load_document(config_path) if config_path else {}

        if flags.get('params'):
            params = load_params(flags['params'])
        elif flags.get('stock'):
            params = preset(flags['stock'])
        elif isinstance(document.get('params'), dict):
            params = params_from_dict(document['params'])
        elif document.get('params'):
            params = load_params(document['params'])
        else:
            params = preset(document.get('stock', DEFAULT_STOCK))

        estimator = EstimatorConfig.from_env()
        values = estimator.to_dict()
        if not os.getenv('AUCTIONLAB_THREADS'):
            values['workers'] = os.cpu_count() or 1
        values.update(document.get('estimator', {}))
        overrides = {
            'seed': flags.get('seed'),
            'paths': flags.get('paths'),
            'method': flags.get('method'),
            'workers': flags.get('threads'),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        estimator = EstimatorConfig.from_dict(values)

        fee_text = _first(flags.get('fee'), document.get('fee'))
        rho_value = _first(flags.get('rho'), document.get('rho'))
        a_value = _first(flags.get('a_grid'), document.get('a_grid'))
        p_value = _first(flags.get('p_grid'), document.get('p_grid'))
        family_value = _first(flags.get('families'), document.get('families'))
        grid_doc = document.get('grid')

        try:
            families = tuple(
                FeeFamily(f.strip().lower())
                for f in (family_value.split(',') if isinstance(family_value, str) else family_value)
            ) if family_value else cls.families
        except ValueError:
            raise ValidationError(f"Unknown fee family in {family_value!r}", field='families')

        objective = ObjectiveSpec(
            kind=_first(flags.get('objective'), document.get('objective'),
                        ObjectiveKind.TOTAL_SPREAD.value),
            rho=_first(flags.get('objective_rho'), document.get('objective_rho')),
            fee_base=_first(flags.get('fee_base'), document.get('fee_base'),
                            FeeBase.ALL_ARRIVALS.value),
        )
        try:
            grid = MuGrid(**grid_doc) if grid_doc else DEFAULT_GRID
        except TypeError as e:
            raise ValidationError(f"Invalid grid settings: {e}", field='grid')

        config = cls(
            params=params,
            beliefs=_first(flags.get('beliefs'), document.get('beliefs'), 'perfect'),
            fee=FeeSchedule.parse(fee_text) if fee_text else FeeSchedule.zero(),
            randomization=_first(flags.get('randomization'), document.get('randomization'), 'p=0'),
            estimator=estimator,
            out_dir=_first(flags.get('out'), document.get('out'), os.getenv('AUCTIONLAB_OUT') or None,
                           DEFAULT_OUT),
            cache_dir=_first(flags.get('cache_dir'), document.get('cache_dir'),
                             os.getenv('AUCTIONLAB_CACHE_DIR') or None),
            rhos=_parse_floats(rho_value, 'rho') if rho_value is not None else DEFAULT_RHOS,
            grid=grid,
            objective=objective,
            families=families,
            a_grid=_parse_floats(a_value, 'a_grid') if a_value is not None else None,
            p_grid=_parse_floats(p_value, 'p_grid') if p_value is not None else DEFAULT_P_GRID,
        )
        config.validate()
        logger.debug("Resolved run config: seed=%d paths=%d method=%s workers=%d",
                     estimator.seed, estimator.paths, estimator.method.value, estimator.workers)
        return config
