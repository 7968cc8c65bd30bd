import logging
import math
from typing import Iterator, Tuple

import numpy as np

from config import settings
from models.kernel import KernelSpec
from models.tree import FittedTree
from services import kernel_service
from utils.exceptions import UnsupportedOperationError

logger = logging.getLogger("smoothing")

class TreeSmoother:
    """
    单棵树的平滑器

    预测值 ŷ̃(x0) = β1 Σ_i c_i ℙ(z ∈ D_i | x0, λ) + β0，叶子盒与常数预先整理成扁平数组，
    每个查询点只需一次 O(kp) 计算，不需要节点导航。实例创建后不再修改。
    """

    __slots__ = ("tree", "kernel", "beta0", "beta1", "_lower", "_upper", "_constants")

    def __init__(self, tree: FittedTree, kernel: KernelSpec, beta0: float = 0.0, beta1: float = 1.0):
        if not (math.isfinite(beta0) and math.isfinite(beta1)):
            raise ValueError(f"β 必须有限，实际为 β0={beta0}, β1={beta1}")
        arrays = tree.arrays()
        self.tree = tree
        self.kernel = kernel
        self.beta0 = float(beta0)
        self.beta1 = float(beta1)
        self._lower = arrays["lower"]
        self._upper = arrays["upper"]
        self._constants = arrays["constants"]

    def __repr__(self):
        return (f"TreeSmoother(leaves={self._constants.size}, family={self.kernel.family}, "
                f"lambda={self.kernel.lam:.4g}, beta0={self.beta0:.4g}, beta1={self.beta1:.4g})")

    @property
    def lam(self) -> float:
        return self.kernel.lam

    def with_params(self, lam: float = None, beta0: float = None, beta1: float = None) -> "TreeSmoother":
        """返回参数替换后的新平滑器（共享叶子数组）"""
        kernel = self.kernel if lam is None else KernelSpec(family=self.kernel.family, lam=lam)
        return TreeSmoother(
            self.tree,
            kernel,
            self.beta0 if beta0 is None else beta0,
            self.beta1 if beta1 is None else beta1,
        )

    def _chunks(self, X: np.ndarray) -> Iterator[np.ndarray]:
        size = max(1, settings.PREDICT_CHUNK_SIZE)
        for start in range(0, X.shape[0], size):
            yield X[start:start + size]

    def probabilities(self, X) -> np.ndarray:
        """(m, k) 叶子概率矩阵"""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        blocks = [kernel_service.box_probabilities(self.kernel, self._lower, self._upper, block)
                  for block in self._chunks(X)]
        return np.vstack(blocks) if blocks else np.zeros((0, self._constants.size))

    def uncalibrated_moments(self, X) -> Tuple[np.ndarray, np.ndarray]:
        """未校准的 (ŷ, Σ c_i² p_i)，供均值与方差共用"""
        probs = self.probabilities(X)
        return probs @ self._constants, probs @ (self._constants * self._constants)

    def predict_uncalibrated_many(self, X) -> np.ndarray:
        return self.probabilities(X) @ self._constants

    def predict_many(self, X) -> np.ndarray:
        return self.beta1 * self.predict_uncalibrated_many(X) + self.beta0

    def moments_many(self, X) -> Tuple[np.ndarray, np.ndarray]:
        """返回校准后的 (均值, 方差)"""
        first, second = self.uncalibrated_moments(X)
        mean = self.beta1 * first + self.beta0
        # 浮点抵消可能得到极小的负数，按定义截断为 0
        variance = (self.beta1 * self.beta1) * np.maximum(second - first * first, 0.0)
        return mean, variance

    def variance_many(self, X) -> np.ndarray:
        return self.moments_many(X)[1]

    def derivative_many(self, X, j: int) -> np.ndarray:
        """∂ŷ̃/∂x0^(j)，仅支持高斯核

        β1 Σ_i c_i [φ(l_ij) − φ(u_ij)] ∏_{d≠j} ℙ(z^(d) ∈ [l_id, u_id))，无穷边界的密度项为 0。
        """
        if self.kernel.family != "gaussian":
            raise UnsupportedOperationError(f"解析导数只支持 gaussian 核，当前为 {self.kernel.family}")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p = X.shape[1]
        if not 0 <= j < p:
            raise ValueError(f"维度 j={j} 超出范围 [0, {p})")
        results = []
        for block in self._chunks(X):
            center = block[:, None, :]
            mass = kernel_service.interval_mass(self.kernel, self._lower[None], self._upper[None], center)
            others = np.prod(np.delete(mass, j, axis=2), axis=2)
            density = (kernel_service.pdf(self.kernel, self._lower[None, :, j], block[:, None, j])
                       - kernel_service.pdf(self.kernel, self._upper[None, :, j], block[:, None, j]))
            results.append((density * others) @ self._constants)
        derivative = np.concatenate(results) if results else np.zeros(0)
        return self.beta1 * derivative

def smoothed_predict(s: TreeSmoother, x0) -> float:
    """单点平滑预测 β1 Σ c_i ℙ(z ∈ D_i) + β0"""
    return float(s.predict_many(np.asarray(x0, dtype=float).reshape(1, -1))[0])

def smoothed_variance(s: TreeSmoother, x0) -> float:
    """单点平滑方差 β1² [Σ c_i² ℙ(z ∈ D_i) − ŷ²]，非负"""
    return float(s.variance_many(np.asarray(x0, dtype=float).reshape(1, -1))[0])

def smoothed_derivative(s: TreeSmoother, x0, j: int) -> float:
    """单点平滑预测对第 j 维的解析导数"""
    return float(s.derivative_many(np.asarray(x0, dtype=float).reshape(1, -1), j)[0])

def smoothed_gradient(s: TreeSmoother, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    return np.array([s.derivative_many(x0, j)[0] for j in range(x0.shape[1])])
