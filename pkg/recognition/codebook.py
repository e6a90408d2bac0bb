"""
码本模块 - K-means码本、BoW直方图与F-score码字筛选
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans

from config import CODEBOOK_CONFIG
from core.exceptions import DegenerateClass, TooFewSamples


@dataclass(eq=False)
class Codebook:
    """
    码本

    centroids以f32精度保存（与模型文件一致），keep_mask为F-score筛选结果，
    views记录参与训练的视角（用于检查训练数据不含测试视角）。
    """
    centroids: np.ndarray
    keep_mask: np.ndarray = None
    seed: int = 0
    inertia: float = 0.0
    views: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=np.float64))
        if self.keep_mask is None:
            self.keep_mask = np.ones(self.k, dtype=bool)
        self.keep_mask = np.asarray(self.keep_mask, dtype=bool)
        if self.k < 1 or not np.all(np.isfinite(self.centroids)):
            raise ValueError("码本至少一个有限的码字")
        if not self.keep_mask.any():
            raise ValueError("码本至少保留一个码字")

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def n_kept(self) -> int:
        return int(self.keep_mask.sum())

    @property
    def kept_centroids(self) -> np.ndarray:
        return self.centroids[self.keep_mask]


def kmeans(descriptors: np.ndarray, k: Optional[int] = None, seed: Optional[int] = None,
           max_iter: Optional[int] = None) -> Codebook:
    """
    K-means聚类（k-means++初始化 + Lloyd迭代）

    Args:
        descriptors: (N, d)
        k: 码字数
        seed: 随机种子
        max_iter: 最大迭代次数

    Returns:
        Codebook
    """
    k = CODEBOOK_CONFIG['k'] if k is None else k
    seed = CODEBOOK_CONFIG['seed'] if seed is None else seed
    max_iter = CODEBOOK_CONFIG['max_iter'] if max_iter is None else max_iter
    X = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    if k < 1:
        raise ValueError(f"K必须 >= 1: {k}")
    if len(X) < k:
        raise TooFewSamples(f"描述子数 {len(X)} 少于码字数 {k}")

    model = KMeans(n_clusters=k, init='k-means++', n_init=1, max_iter=max_iter,
                   random_state=seed, algorithm='lloyd')
    model.fit(X)
    centroids = model.cluster_centers_.astype(np.float32).astype(np.float64)
    return Codebook(centroids, seed=seed, inertia=float(model.inertia_))


def assign(descriptors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """最近码字编号，距离相同取编号最小者"""
    X = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    if len(X) == 0:
        return np.empty(0, dtype=np.int64)
    return np.argmin(cdist(X, centroids), axis=1)


def bow_histogram(descriptors: np.ndarray, codebook: Codebook, use_mask: bool = True) -> np.ndarray:
    """
    BoW直方图

    Args:
        descriptors: (n, d)，可以为空
        codebook: 码本
        use_mask: True 时只在保留的码字上投票

    Returns:
        长度 K'（或K）的计数
    """
    centroids = codebook.kept_centroids if use_mask else codebook.centroids
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        return np.zeros(len(centroids), dtype=np.int64)
    return np.bincount(assign(descriptors, centroids), minlength=len(centroids)).astype(np.int64)


def fscore_matrix(features: np.ndarray, labels) -> np.ndarray:
    """
    每一列的F-score

    F = sum_j (mean_j - mean)^2 / sum_j [1/(n_j-1)] sum_k (x_k - mean_j)^2，
    分母为0时分子大于0记为 +inf，0/0 记为0。
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise DegenerateClass("F-score至少需要两个类别")
    if counts.min() < 2:
        raise DegenerateClass(f"类别 {classes[np.argmin(counts)]} 只有 {counts.min()} 个样本")

    overall = X.mean(axis=0)
    numerator = np.zeros(X.shape[1])
    denominator = np.zeros(X.shape[1])
    for c, n in zip(classes, counts):
        rows = X[labels == c]
        mean = rows.mean(axis=0)
        numerator += (mean - overall) ** 2
        denominator += ((rows - mean) ** 2).sum(axis=0) / (n - 1)

    with np.errstate(divide='ignore', invalid='ignore'):
        score = numerator / denominator
    return np.where(denominator > 0, score, np.where(numerator > 0, np.inf, 0.0))


def fscore(column, labels) -> float:
    """单个特征列的F-score"""
    return float(fscore_matrix(np.asarray(column, dtype=np.float64).reshape(-1, 1), labels)[0])


def select_features(scores: np.ndarray, keep_fraction: Optional[float] = None,
                    threshold: Optional[float] = None) -> np.ndarray:
    """
    按F-score保留码字

    Args:
        scores: 每个码字的F-score
        keep_fraction: 保留最高的 ceil(fraction * K) 个，分数相同按编号
        threshold: 设置时改为保留 F > threshold 的码字（至少保留一个）

    Returns:
        布尔掩码
    """
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind='stable')
    mask = np.zeros(len(scores), dtype=bool)
    if threshold is not None:
        mask = scores > threshold
        if not mask.any():
            mask[order[0]] = True
        return mask
    if keep_fraction is None or not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction必须在(0,1]之间: {keep_fraction}")
    n_keep = max(1, math.ceil(round(keep_fraction * len(scores), 9)))
    mask[order[:n_keep]] = True
    return mask
