"""
识别模块 - 码本、HIK-SVM、识别流程、模型文件与评估
"""
from .codebook import Codebook, kmeans, assign, bow_histogram, fscore, fscore_matrix, select_features
from .classifier import KernelModel, hik, hik_gram, train, predict, predict_many, predict_with_scores
from .pipeline import (
    SETTINGS, PipelineParams, SequenceFeatures, ActionDescriptor, ActionModel,
    extract_features, features_from_descriptors, action_descriptor, train_codebook, mine_codewords, fit_model,
    predict_features, classify_sequence
)
from .model_io import save_codebook, load_codebook, save_model, load_model
from .evaluate import (
    Sample, EvaluationResult, load_index, load_sequence, benchmark_samples, benchmark_params,
    split_cross_view, split_cross_subject, evaluate, sweep
)

__all__ = [
    'Codebook', 'kmeans', 'assign', 'bow_histogram', 'fscore', 'fscore_matrix', 'select_features',
    'KernelModel', 'hik', 'hik_gram', 'train', 'predict', 'predict_many', 'predict_with_scores',
    'SETTINGS', 'PipelineParams', 'SequenceFeatures', 'ActionDescriptor', 'ActionModel',
    'extract_features', 'features_from_descriptors', 'action_descriptor', 'train_codebook', 'mine_codewords', 'fit_model',
    'predict_features', 'classify_sequence',
    'save_codebook', 'load_codebook', 'save_model', 'load_model',
    'Sample', 'EvaluationResult', 'load_index', 'load_sequence', 'benchmark_samples', 'benchmark_params',
    'split_cross_view', 'split_cross_subject', 'evaluate', 'sweep',
]
