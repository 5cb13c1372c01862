"""
前向模式对偶数，用于 MEE 动力学的精确偏导数。

Dual(val, grad, level) 表示 val + Σ grad_i ε_i。val 本身可以是更低层级的
Dual，因此嵌套一层即可得到二阶导数。不同层级的对偶数相遇时，层级低的一方
被视为常数，避免扰动混淆。
"""

from typing import List, Sequence

import numpy as np


class Dual:
    __slots__ = ("val", "grad", "level")

    def __init__(self, val, grad: np.ndarray, level: int = 0):
        self.val = val
        self.grad = grad
        self.level = level

    def __repr__(self):
        return f"Dual({self.val!r}, {self.grad!r}, level={self.level})"

    def _relation(self, other) -> int:
        """0: 同层；-1: other 视为常数；1: 交给 other 处理"""
        if isinstance(other, np.ndarray):
            return 1
        other_level = other.level if isinstance(other, Dual) else -1
        if other_level > self.level:
            return 1
        return 0 if other_level == self.level else -1

    def _defer(self, other, reflected: str):
        """other 层级更高时由它的反射运算处理，self 作为常数"""
        if isinstance(other, Dual):
            return getattr(other, reflected)(self)
        return NotImplemented

    def __add__(self, other):
        rel = self._relation(other)
        if rel > 0:
            return self._defer(other, "__radd__")
        if rel == 0:
            return Dual(self.val + other.val, self.grad + other.grad, self.level)
        return Dual(self.val + other, self.grad, self.level)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        rel = self._relation(other)
        if rel > 0:
            return self._defer(other, "__rsub__")
        if rel == 0:
            return Dual(self.val - other.val, self.grad - other.grad, self.level)
        return Dual(self.val - other, self.grad, self.level)

    def __rsub__(self, other):
        rel = self._relation(other)
        if rel > 0:
            return NotImplemented
        return Dual(other - self.val, -self.grad, self.level)

    def __mul__(self, other):
        rel = self._relation(other)
        if rel > 0:
            return self._defer(other, "__rmul__")
        if rel == 0:
            return Dual(
                self.val * other.val,
                self.grad * other.val + other.grad * self.val,
                self.level,
            )
        return Dual(self.val * other, self.grad * other, self.level)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        rel = self._relation(other)
        if rel > 0:
            return self._defer(other, "__rtruediv__")
        if rel == 0:
            inv = 1.0 / other.val
            val = self.val * inv
            return Dual(val, (self.grad - other.grad * val) * inv, self.level)
        return Dual(self.val / other, self.grad / other, self.level)

    def __rtruediv__(self, other):
        rel = self._relation(other)
        if rel > 0:
            return NotImplemented
        inv = 1.0 / self.val
        val = other * inv
        return Dual(val, self.grad * (-val * inv), self.level)

    def __neg__(self):
        return Dual(-self.val, -self.grad, self.level)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            raise TypeError("Dual exponents are not supported")
        if exponent == 2:
            return self * self
        return Dual(
            self.val**exponent,
            self.grad * (exponent * self.val ** (exponent - 1)),
            self.level,
        )


def value(x) -> float:
    """剥离所有对偶层级，返回实数部分"""
    while isinstance(x, Dual):
        x = x.val
    return float(x)


def dsqrt(x):
    if isinstance(x, Dual):
        s = dsqrt(x.val)
        return Dual(s, x.grad * (0.5 / s), x.level)
    return np.sqrt(x)


def dsin(x):
    if isinstance(x, Dual):
        return Dual(dsin(x.val), x.grad * dcos(x.val), x.level)
    return np.sin(x)


def dcos(x):
    if isinstance(x, Dual):
        return Dual(dcos(x.val), x.grad * (-dsin(x.val)), x.level)
    return np.cos(x)


def dual_level(x) -> int:
    return x.level if isinstance(x, Dual) else -1


def seed(values: Sequence) -> List[Dual]:
    """把每个输入变成一个自变量，层级高于输入中已有的对偶数"""
    level = 1 + max((dual_level(v) for v in values), default=-1)
    n = len(values)
    identity = np.eye(n)
    return [Dual(v, identity[i].copy(), level) for i, v in enumerate(values)]


def split(x, level: int, n: int):
    """返回指定层级的 (值, 梯度)，常数的梯度为零"""
    if isinstance(x, Dual) and x.level == level:
        return x.val, x.grad
    return x, np.zeros(n)


def stack(items: Sequence) -> np.ndarray:
    """含对偶数时用 object 数组，否则用 float 数组"""
    items = list(items)
    if not any(_contains_dual(item) for item in items):
        return np.array(items, dtype=float)
    if items and isinstance(items[0], np.ndarray):
        return np.array([np.asarray(item, dtype=object) for item in items], dtype=object)
    out = np.empty(len(items), dtype=object)
    for i, item in enumerate(items):
        out[i] = item
    return out


def _contains_dual(item) -> bool:
    if isinstance(item, Dual):
        return True
    if isinstance(item, np.ndarray) and item.dtype == object:
        return any(isinstance(e, Dual) for e in item.flat)
    return False


def jacobian_rows(outputs: Sequence, level: int, n: int) -> np.ndarray:
    """把指定层级的梯度堆成 (len(outputs), n) 浮点矩阵"""
    jac = np.zeros((len(outputs), n))
    for i, out in enumerate(outputs):
        _, grad = split(out, level, n)
        jac[i] = np.asarray(grad, dtype=float)
    return jac
