"""
Ablation Service
Prompt-form, prompt-component and fusion-order ablation suites, averaged over seeds
"""

from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from mfsb.core.fusion import FusionOrder
from mfsb.core.prompts import Element, PromptForm
from mfsb.models.config import FORM_LABELS, ORDER_LABELS, ExperimentConfig, config_from_flat, flat_config
from mfsb.models.report import EvalReport, ResultsRow, ResultsTable
from mfsb.services.experiment_service import ExperimentService
from mfsb.utils.errors import ConfigError
from mfsb.utils.logger import app_logger

SUITES = ("prompt_forms", "components", "fusion")

PAIR_FORM_ORDER = (PromptForm.HARD_SOFT, PromptForm.HARD, PromptForm.SOFT)
PRIMITIVE_FORM_ORDER = (PromptForm.HARD, PromptForm.SOFT, PromptForm.HARD_SOFT)

COMPONENT_ROWS: Tuple[Tuple[str, Tuple[Element, ...]], ...] = (
    ("Pair", (Element.PAIR,)),
    ("Object", (Element.OBJ,)),
    ("State", (Element.ATTR,)),
    ("Object + State", (Element.ATTR, Element.OBJ)),
    ("Pair + Object", (Element.PAIR, Element.OBJ)),
    ("Pair + State", (Element.PAIR, Element.ATTR)),
    ("Pair + State + Object", (Element.PAIR, Element.ATTR, Element.OBJ)),
)

FUSION_ROWS = (
    FusionOrder.NONE,
    FusionOrder.INTRA,
    FusionOrder.INTER,
    FusionOrder.INTRA_INTER,
    FusionOrder.INTER_INTRA,
)


def _variant(base: ExperimentConfig, **overrides) -> ExperimentConfig:
    values = flat_config(base)
    values.update(overrides)
    return config_from_flat(values)


def form_label(pair: PromptForm, obj: PromptForm, attr: PromptForm) -> str:
    return f"{FORM_LABELS[pair]} {{Pair}}, {FORM_LABELS[obj]} {{Obj}}, {FORM_LABELS[attr]} {{Attr}}"


def suite_variants(suite: str, base: ExperimentConfig) -> List[Tuple[str, ExperimentConfig]]:
    """
    (row label, config) for every row of an ablation suite

    Raises:
        ConfigError: unknown suite
    """
    if suite == "prompt_forms":
        return [
            (form_label(p, o, a), _variant(base, **{"prompt.pair": p, "prompt.obj": o, "prompt.attr": a}))
            for p, o, a in product(PAIR_FORM_ORDER, PRIMITIVE_FORM_ORDER, PRIMITIVE_FORM_ORDER)
        ]
    if suite == "components":
        return [(label, _variant(base, elements=elements)) for label, elements in COMPONENT_ROWS]
    if suite == "fusion":
        return [(ORDER_LABELS[order], _variant(base, **{"fusion.order": order})) for order in FUSION_ROWS]
    raise ConfigError(f"Unknown ablation suite: {suite} (expected one of {', '.join(SUITES)})", key="suite")


def seed_list(base: ExperimentConfig, seeds: Union[int, Sequence[int]]) -> List[int]:
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("seeds must be >= 1", key="seeds")
        return [base.seed + i for i in range(seeds)]
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("seeds must be nonempty", key="seeds")
    return seeds


def mean_row(method: str, reports: Sequence[EvalReport]) -> ResultsRow:
    return ResultsRow(
        method=method,
        seen=float(np.mean([r.seen_acc for r in reports])),
        unseen=float(np.mean([r.unseen_acc for r in reports])),
        hm=float(np.mean([r.harmonic_mean for r in reports])),
        auc=float(np.mean([r.auc for r in reports])),
    )


class AblationService:
    """Service for running ablation suites"""

    def __init__(self, experiments: Optional[ExperimentService] = None):
        self.experiments = experiments or ExperimentService()

    def run_ablation_suite(
        self,
        suite: str,
        base: ExperimentConfig,
        seeds: Union[int, Sequence[int]] = 5,
        persist: bool = True,
    ) -> Dict[str, ResultsTable]:
        """
        Run every row of a suite for every seed

        Args:
            suite: prompt_forms (27 rows), components (7) or fusion (5)
            base: Config every row starts from
            seeds: Number of seeds (counting up from base.seed) or explicit seeds
            persist: Keep run directories for each cell

        Returns:
            world -> table of mean-over-seeds rows, with per-seed rows attached

        Raises:
            ConfigError: unknown suite or empty seed list
            ExperimentError: a cell failed
        """
        variants = suite_variants(suite, base)
        seeds = seed_list(base, seeds)
        worlds = base.eval.worlds
        tables = {world: ResultsTable(world=world) for world in worlds}

        app_logger.info("ablation_start", suite=suite, rows=len(variants), seeds=seeds, worlds=worlds)

        for label, variant in variants:
            per_world: Dict[str, List[EvalReport]] = {world: [] for world in worlds}
            for seed in seeds:
                config = _variant(variant, seed=seed)
                result = self.experiments.run_experiment(config, method=label, persist=persist)
                for report in result.reports:
                    per_world[report.world].append(report)
            for world in worlds:
                table = tables[world]
                table.rows.append(mean_row(label, per_world[world]))
                table.per_seed[label] = [ResultsRow.from_report(r, label) for r in per_world[world]]
            app_logger.info("ablation_row_complete", suite=suite, method=label)

        return tables
