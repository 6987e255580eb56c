from .baseline import bow_linear_baseline, table_csv, token_length_report
from .experiment import DirectionResult, DirectionSetup, run_direction_experiment
from .data import DataError, FoldPlan, LabeledDataset, StratificationError, stratified_folds
from .loops import EvalReport, FinetuneConfig, PretrainResult, finetune, predict_proba, pretrain
from .metrics import MetricError, accuracy, all_metrics, auprc, auroc
from .synth import SynthParams, SyntheticTask, collapsed_mutual_information, synth_disease_task

__all__ = [
    "DataError",
    "DirectionResult",
    "DirectionSetup",
    "EvalReport",
    "FinetuneConfig",
    "FoldPlan",
    "LabeledDataset",
    "MetricError",
    "PretrainResult",
    "StratificationError",
    "SynthParams",
    "SyntheticTask",
    "accuracy",
    "all_metrics",
    "auprc",
    "auroc",
    "bow_linear_baseline",
    "collapsed_mutual_information",
    "finetune",
    "predict_proba",
    "pretrain",
    "run_direction_experiment",
    "stratified_folds",
    "synth_disease_task",
    "table_csv",
    "token_length_report",
]
