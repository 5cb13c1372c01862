class TrajectoryError(ValueError):
    """物理上无效的状态或输入（碰撞、p<=0、直线轨道等）"""


class SingularControlError(TrajectoryError):
    """主矢量范数低于奇异阈值，雅可比矩阵无定义"""


class RootBracketError(TrajectoryError):
    """平动点求根区间内没有变号"""


class IntegrationError(RuntimeError):
    """积分步数耗尽或出现非有限值"""
