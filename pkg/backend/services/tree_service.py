import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import Dataset
from models.tree import FittedTree, LeafRegion, TreeParams
from utils.exceptions import ConfigurationError

logger = logging.getLogger("smoothing")

# 分裂增益低于节点 SSE 的这个比例时视为无效分裂
_MIN_RELATIVE_GAIN = 1e-12

def fit_tree(dataset: Dataset, rows: Sequence[int], params: Optional[TreeParams] = None,
             oob_indices: Optional[Sequence[int]] = None) -> FittedTree:
    """在袋内行（多重集）上贪心地生长一棵 CART 回归树

    - 分裂准则：最小化子节点平方误差之和
    - 阈值取分隔最优切点的两个相邻特征值的中点，x[j] < 阈值 走左子树
    - 同等增益时取特征编号最小、阈值最小的分裂
    - 叶子常数为袋内目标均值
    """
    params = params or TreeParams()
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise ConfigurationError("训练行集合为空，无法拟合树")

    X = dataset.features[rows]
    y = dataset.targets[rows]
    p = dataset.p
    mtry = params.resolve_mtry(p)
    rng = np.random.default_rng(params.seed)

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    n_node_samples: List[int] = []

    def new_node(sample_idx: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[sample_idx])))
        n_node_samples.append(int(sample_idx.size))
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node_id, sample_idx, depth = stack.pop()
        split = None
        if _can_split(sample_idx.size, depth, params):
            candidates = np.sort(rng.choice(p, size=mtry, replace=False)) if mtry < p else np.arange(p)
            split = _best_split(X[sample_idx], y[sample_idx], candidates, params.min_samples_leaf)
        if split is None:
            continue

        j, t = split
        go_left = X[sample_idx, j] < t
        left_id = new_node(sample_idx[go_left])
        right_id = new_node(sample_idx[~go_left])
        feature[node_id] = int(j)
        threshold[node_id] = float(t)
        left[node_id] = left_id
        right[node_id] = right_id
        # 先压右子树，保证左子树先展开，编号顺序与递归先序一致
        stack.append((right_id, sample_idx[~go_left], depth + 1))
        stack.append((left_id, sample_idx[go_left], depth + 1))

    leaves = _leaf_regions_from_nodes(feature, threshold, left, right, value, p)
    if oob_indices is None:
        oob_indices = np.setdiff1d(np.arange(dataset.n), rows)

    tree = FittedTree(
        n_features=p,
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        value=value,
        n_node_samples=n_node_samples,
        leaves=leaves,
        in_bag_indices=rows.tolist(),
        oob_indices=np.asarray(oob_indices, dtype=int).tolist(),
    )
    logger.debug(f"Fitted tree: nodes={len(feature)}, leaves={len(leaves)}, rows={rows.size}")
    return tree

def _can_split(n_samples: int, depth: int, params: TreeParams) -> bool:
    if params.max_depth is not None and depth >= params.max_depth:
        return False
    return n_samples >= 2 * params.min_samples_leaf

def _best_split(X: np.ndarray, y: np.ndarray, candidates: np.ndarray,
                min_samples_leaf: int) -> Optional[Tuple[int, float]]:
    """在候选特征上穷举所有切点，返回 (特征, 阈值)；无有效分裂时返回 None"""
    n = y.size
    if np.ptp(y) == 0:
        return None
    # 先按节点均值中心化，SSE 的减少量等于 csum² · n / (n_l · n_r)
    centered = y - np.mean(y)
    node_sse = float(np.dot(centered, centered))
    n_left = np.arange(1, n)
    n_right = n - n_left
    size_ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)

    best_gain = _MIN_RELATIVE_GAIN * node_sse
    best = None
    for j in candidates:
        order = np.argsort(X[:, j], kind="mergesort")
        xs = X[order, j]
        csum = np.cumsum(centered[order])[:-1]
        valid = size_ok & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        gain = np.where(valid, csum * csum * n / (n_left * n_right), -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            t = 0.5 * (xs[i] + xs[i + 1])
            # 相邻浮点数的中点可能舍入到左端点
            if not t > xs[i]:
                t = xs[i + 1]
            best_gain = float(gain[i])
            best = (int(j), float(t))
    return best

def _leaf_regions_from_nodes(feature: Sequence[int], threshold: Sequence[float], left: Sequence[int],
                             right: Sequence[int], value: Sequence[float], p: int) -> List[LeafRegion]:
    """从根节点 (−∞, +∞)^p 出发，逐层与祖先半空间求交得到叶子盒"""
    n_nodes = len(feature)
    lower = np.full((n_nodes, p), -np.inf)
    upper = np.full((n_nodes, p), np.inf)
    leaves = []
    stack = [0]
    while stack:
        node_id = stack.pop()
        j = feature[node_id]
        if j < 0:
            leaves.append(LeafRegion(
                lower=lower[node_id].tolist(),
                upper=upper[node_id].tolist(),
                constant=value[node_id],
                node_id=node_id,
            ))
            continue
        t = threshold[node_id]
        left_id, right_id = left[node_id], right[node_id]
        lower[left_id] = lower[node_id]
        upper[left_id] = upper[node_id]
        upper[left_id, j] = t
        lower[right_id] = lower[node_id]
        upper[right_id] = upper[node_id]
        lower[right_id, j] = t
        stack.append(right_id)
        stack.append(left_id)
    leaves.sort(key=lambda leaf: leaf.node_id)
    return leaves

def extract_leaf_regions(tree: FittedTree) -> List[LeafRegion]:
    """由分裂节点重新推导叶子区域列表（两两不交，并集为 ℝ^p）"""
    return _leaf_regions_from_nodes(tree.feature, tree.threshold, tree.left, tree.right, tree.value,
                                    tree.n_features)

def tree_predict_raw(tree: FittedTree, x) -> float:
    """沿分裂节点导航，返回包含 x 的叶子常数"""
    x = np.asarray(x, dtype=float).reshape(-1)
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] < tree.threshold[node] else tree.right[node]
    return tree.value[node]

def tree_predict_raw_by_box(tree: FittedTree, x) -> float:
    """按叶子盒成员关系求值，与导航结果应完全一致"""
    x = np.asarray(x, dtype=float).reshape(-1)
    arrays = tree.arrays()
    inside = np.all((arrays["lower"] <= x) & (x < arrays["upper"]), axis=1)
    hits = np.flatnonzero(inside)
    if hits.size != 1:
        raise ConfigurationError(f"点 {x.tolist()} 落在 {hits.size} 个叶子区域中")
    return float(arrays["constants"][hits[0]])

def apply_many(tree: FittedTree, X: np.ndarray) -> np.ndarray:
    """批量导航，返回每个点所在的节点编号"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    arrays = tree.arrays()
    feature, threshold = arrays["feature"], arrays["threshold"]
    node = np.zeros(X.shape[0], dtype=int)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        current = node[active]
        go_left = X[active, feature[current]] < threshold[current]
        node[active] = np.where(go_left, arrays["left"][current], arrays["right"][current])
        active = active[feature[node[active]] >= 0]
    return node

def tree_predict_raw_many(tree: FittedTree, X: np.ndarray) -> np.ndarray:
    """批量原始（未平滑）预测"""
    return tree.arrays()["value"][apply_many(tree, X)]

def translate_tree(tree: FittedTree, delta) -> FittedTree:
    """把所有分裂点与叶子边界平移 δ

    平移后的树在 x0 处的取值等于原树在 x0 − δ 处的取值。
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.size != tree.n_features:
        raise ValueError(f"平移向量维数 {delta.size} 与特征数 {tree.n_features} 不一致")
    threshold = [
        t + float(delta[j]) if j >= 0 else t
        for j, t in zip(tree.feature, tree.threshold)
    ]
    leaves = [
        LeafRegion(
            lower=(np.asarray(leaf.lower) + delta).tolist(),
            upper=(np.asarray(leaf.upper) + delta).tolist(),
            constant=leaf.constant,
            node_id=leaf.node_id,
        )
        for leaf in tree.leaves
    ]
    # 重新构造而不是 copy()，避免共享原树的 numpy 缓存
    return FittedTree(**{**tree.dict(exclude={"threshold", "leaves"}), "threshold": threshold, "leaves": leaves})
