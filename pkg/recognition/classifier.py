"""
分类器模块 - 直方图交核SVM（一对多）

每个类别训练一个二分类SVM（libsvm的SMO对偶求解器，核矩阵预先计算），
训练后支持向量、对偶系数与偏置立即转为f32，保存/加载后决策值完全一致。
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.svm import SVC

from config import CLASSIFIER_CONFIG
from core.exceptions import DegenerateTraining

GRAM_BLOCK_ELEMENTS = 2 ** 24       # 每块 min() 运算的元素数上限


def hik(x, y) -> float:
    """直方图交核 sum_i min(x_i, y_i)"""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"长度不一致: {len(x)} vs {len(y)}")
    return float(np.minimum(x, y).sum())


def hik_gram(A: np.ndarray, B: Optional[np.ndarray] = None) -> np.ndarray:
    """
    核矩阵 K[i, j] = hik(A[i], B[j])

    按行分块计算，每块最多 GRAM_BLOCK_ELEMENTS 个元素。
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"维度不一致: {A.shape[1]} vs {B.shape[1]}")
    K = np.empty((len(A), len(B)))
    chunk = max(1, GRAM_BLOCK_ELEMENTS // max(1, B.size))
    for start in range(0, len(A), chunk):
        block = A[start:start + chunk]
        K[start:start + len(block)] = np.minimum(block[:, None, :], B[None, :, :]).sum(axis=2)
    return K


@dataclass(eq=False)
class KernelModel:
    """
    一对多HIK-SVM

    support_vectors: (n_sv, d) f32，各二分类器支持向量的并集
    dual_coef: (n_classes, n_sv) f32，y_i * alpha_i
    intercept: (n_classes,) f32
    """
    classes: List[str]
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    intercept: np.ndarray
    c: float = 1.0
    iterations: List[int] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]


def train(descriptors: np.ndarray, labels: Sequence, c: Optional[float] = None,
          tol: Optional[float] = None, max_passes: Optional[int] = None) -> KernelModel:
    """
    训练一对多SVM

    Args:
        descriptors: (n, d) 非负直方图
        labels: 类别标签
        c: 正则化参数
        tol: KKT违反容差
        max_passes: 最大迭代次数

    Returns:
        KernelModel
    """
    c = CLASSIFIER_CONFIG['c'] if c is None else c
    tol = CLASSIFIER_CONFIG['tol'] if tol is None else tol
    max_passes = CLASSIFIER_CONFIG['max_passes'] if max_passes is None else max_passes
    X = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    labels = np.asarray([str(v) for v in labels])
    if len(X) != len(labels):
        raise ValueError(f"样本数与标签数不一致: {len(X)} vs {len(labels)}")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise DegenerateTraining(f"训练数据只有一个类别: {classes}")

    gram = hik_gram(X)
    coef = np.zeros((len(classes), len(X)))
    intercept = np.zeros(len(classes))
    iterations = []
    for i, cls in enumerate(classes):
        y = np.where(labels == cls, 1, -1)
        svm = SVC(C=c, kernel='precomputed', tol=tol, max_iter=max_passes)
        svm.fit(gram, y)
        coef[i, svm.support_] = svm.dual_coef_[0]
        intercept[i] = svm.intercept_[0]
        iterations.append(int(np.ravel(getattr(svm, 'n_iter_', [0]))[0]))

    used = np.flatnonzero(np.any(coef != 0, axis=0))
    return KernelModel(
        classes=classes,
        support_vectors=X[used].astype(np.float32),
        dual_coef=coef[:, used].astype(np.float32),
        intercept=intercept.astype(np.float32),
        c=float(c),
        iterations=iterations,
    )


def decision_scores(model: KernelModel, descriptors: np.ndarray) -> np.ndarray:
    """每个类别的一对多决策值 (n, n_classes)"""
    X = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    if X.shape[1] != model.dim:
        raise ValueError(f"描述子维度 {X.shape[1]} 与模型 {model.dim} 不一致")
    K = hik_gram(X, model.support_vectors.astype(np.float64))
    coef = model.dual_coef.astype(np.float64)
    # 固定求和顺序，结果与数组内存对齐无关
    return (K[:, :, None] * coef.T[None]).sum(axis=1) + model.intercept.astype(np.float64)


def predict_many(model: KernelModel, descriptors: np.ndarray) -> List[str]:
    """得分最高的类别，相同时取编号最小的类别"""
    scores = decision_scores(model, descriptors)
    return [model.classes[i] for i in np.argmax(scores, axis=1)]


def predict(model: KernelModel, descriptor: np.ndarray) -> str:
    return predict_many(model, np.asarray(descriptor).reshape(1, -1))[0]


def predict_with_scores(model: KernelModel, descriptor: np.ndarray) -> Tuple[str, Dict[str, float]]:
    scores = decision_scores(model, np.asarray(descriptor).reshape(1, -1))[0]
    return model.classes[int(np.argmax(scores))], dict(zip(model.classes, map(float, scores)))
