import logging
import threading
from typing import Any, Dict, Hashable, Optional

import numpy as np

logger = logging.getLogger("smoothing")

class CacheService:
    """
    OOB 预测缓存

    以 (树编号, λ) 为键缓存未校准的 OOB 平滑预测，β 的最小二乘重拟合与候选比较
    都直接复用，不再重复计算叶子概率。线程安全，供并行的局部校准共享。
    """

    def __init__(self, max_entries: Optional[int] = None):
        self.max_entries = max_entries
        self._store: Dict[Hashable, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def make_key(tree_index: int, lam: float) -> Hashable:
        # 用 float 的精确值做键，网格点与黄金分割点不会误合并
        return (int(tree_index), float(lam).hex())

    def get(self, key: Hashable) -> Optional[np.ndarray]:
        """从缓存获取值"""
        with self._lock:
            value = self._store.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def set(self, key: Hashable, value: np.ndarray) -> bool:
        """设置缓存值，超过容量时丢弃最早写入的条目"""
        with self._lock:
            if self.max_entries is not None and len(self._store) >= self.max_entries and key not in self._store:
                oldest = next(iter(self._store))
                del self._store[oldest]
            value = np.asarray(value, dtype=float)
            value.setflags(write=False)
            self._store[key] = value
            return True

    def get_or_compute(self, key: Hashable, compute) -> np.ndarray:
        """未命中时计算并写入，返回刚写入的只读数组（不再回读缓存，容量淘汰不影响返回值）"""
        cached = self.get(key)
        if cached is not None:
            return cached
        value = np.asarray(compute(), dtype=float)
        self.set(key, value)
        return value

    def delete(self, key: Hashable) -> bool:
        """删除缓存值"""
        with self._lock:
            return self._store.pop(key, None) is not None

    def clear_all(self) -> bool:
        """清空所有缓存"""
        with self._lock:
            self._store.clear()
            self.hits = 0
            self.misses = 0
            return True

    def get_stats(self) -> Dict[str, Any]:
        """获取缓存统计信息"""
        with self._lock:
            lookups = self.hits + self.misses
            return {
                "total_keys": len(self._store),
                "hits": self.hits,
                "misses": self.misses,
                "hit_rate": self.hits / lookups if lookups > 0 else 0.0,
            }
