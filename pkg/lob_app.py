from dataclasses import dataclass
from threading import Lock
from typing import Dict, Optional, Sequence, Union

import pandas as pd

from config import Config
from errors import ModelValidationError
from logger import setup_logger
from analysis_module import AnalysisReport, LimitResult, alternating_limits, analyze, long_time_limit
from backward_engine import compute_Y, compute_Y_pimi, export_y_field, value_function
from backward_engine.engine_types import YField
from execution_module import (
    CostReport, StrategyField, evaluate_strategy, generate_strategy, overlay_unaffected_price,
)
from execution_strategies import create_execution_strategy
from market_model import (
    PIMIModel, ScenarioTree, ValidationReport, load_model, model_from_dict, pimi_to_tree,
    validate, validate_pimi,
)
from market_model.example_builders import build_example
from oracle_module import GridSpec, MCConfig, VerificationReport, verify

logger = setup_logger('LobExecApp')


@dataclass
class SolveResult:
    x: float
    d: float
    value: float
    strategy: StrategyField
    cost: CostReport
    y_frame: pd.DataFrame
    rule: Optional[Dict] = None

    @property
    def excess_cost(self) -> float:
        """Expected cost of the evaluated rule above the optimum"""
        return self.cost.expected_cost - self.value

    def to_dict(self) -> Dict:
        return {
            'x': self.x,
            'd': self.d,
            'value': self.value,
            'expected_cost': self.cost.expected_cost,
            'excess_cost': self.excess_cost,
            'rule': self.rule,
            'price_overlay_offset': self.cost.price_overlay_offset,
            'Y': self.y_frame.to_dict(orient='records'),
            'strategy': self.strategy.to_frame().to_dict(orient='records'),
        }


class LobExecApp:
    """One market model plus the solved quantities derived from it.

    A PIMI model is expanded to a tree for strategies and the oracle; its
    Y field stays deterministic (keyed by time).
    """

    def __init__(self, model: Union[ScenarioTree, PIMIModel], label: str = 'model'):
        self.model = model
        self.label = label
        self.pimi = model if isinstance(model, PIMIModel) else None
        self._tree: Optional[ScenarioTree] = None if self.pimi else model
        self._yfield: Optional[YField] = None
        self._report: Optional[ValidationReport] = None
        self.lock = Lock()  # guards the lazily solved tree and Y field

    @classmethod
    def from_source(cls, source: str) -> 'LobExecApp':
        return cls(load_model(source), label=str(source))

    @classmethod
    def from_dict(cls, spec: Dict) -> 'LobExecApp':
        return cls(model_from_dict(spec), label='request')

    @classmethod
    def from_example(cls, name: str, seed: int = 0) -> 'LobExecApp':
        return cls(build_example(name, seed), label=f"example {name}")

    def validate(self) -> ValidationReport:
        if self._report is None:
            self._report = validate_pimi(self.pimi) if self.pimi else validate(self.model)
            status = "valid" if self._report.ok else f"{len(self._report.violations)} violation(s)"
            logger.info(f"[VALIDATE] {self.label}: {status}")
        return self._report

    def require_valid(self) -> None:
        report = self.validate()
        if not report.ok:
            worst = report.violations[0]
            raise ModelValidationError(
                f"{self.label} violates {worst.rule} at {worst.location} (value {worst.value!r})", report
            )

    @property
    def tree(self) -> ScenarioTree:
        with self.lock:
            if self._tree is None:
                self._tree = pimi_to_tree(self.pimi)
            return self._tree

    @property
    def yfield(self) -> YField:
        self.require_valid()
        tree = self.tree
        with self.lock:
            if self._yfield is None:
                self._yfield = compute_Y_pimi(self.pimi) if self.pimi else compute_Y(tree)
            return self._yfield

    def solve(self, x: float, d: float, s0: Optional[float] = None,
              strategy: Optional[Dict] = None) -> SolveResult:
        """Value and optimal strategy from (x, d), plus the exact cost of `strategy`.

        `strategy` is a create_execution_strategy spec and defaults to the
        optimal rule, in which case the expected cost equals the value.
        """
        yfield, tree = self.yfield, self.tree
        value = value_function(tree, tree.root, yfield, x, d)
        optimal = generate_strategy(tree, yfield, x, d)
        rule = create_execution_strategy(tree, yfield, strategy or {'type': 'OPTIMAL'})
        cost = evaluate_strategy(tree, rule, x, d)
        if s0 is not None:
            cost = overlay_unaffected_price(cost, s0, x)
        logger.info(
            f"[SOLVE] {self.label} from (x={x!r}, d={d!r}): value {value!r}, "
            f"{rule.describe()['type']} costs {cost.expected_cost!r}"
        )
        return SolveResult(x, d, value, optimal, cost, export_y_field(tree, yfield), rule.describe())

    def analyze(self, tol: float = Config.EVENT_TOL) -> AnalysisReport:
        report = analyze(self.tree, self.yfield, tol, pimi=self.pimi)
        logger.info(f"[ANALYZE] {self.label}: {len(report.nodes)} node(s) classified")
        return report

    def verify(self, x: float, d: float, grid: Optional[GridSpec] = None, mc: Optional[MCConfig] = None,
               tol: float = Config.ORACLE_TOL) -> VerificationReport:
        self.require_valid()
        return verify(self.tree, x, d, grid, mc, tol)

    @staticmethod
    def limit(params: Sequence[float], second: Optional[Sequence[float]] = None,
              tol: float = Config.LIMIT_TOL) -> LimitResult:
        if second is None:
            return long_time_limit(*params, tol=tol)
        return alternating_limits(params, second, tol=tol)
