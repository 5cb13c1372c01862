import logging


class LoggingMixin:
    """服务类共用的日志配置；子类需先设置 self._debug"""

    _debug: bool = False

    def _setup_logging(self):
        """配置日志系统，logger 以子类所在模块命名"""
        self.logger = logging.getLogger(type(self).__module__)
        if not self.logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)

        if self._debug:
            self.logger.setLevel(logging.DEBUG)
        else:
            self.logger.setLevel(logging.INFO)

    def _log(self, message: str, level: str = "debug"):
        """统一的日志记录方法，非调试模式下忽略 debug/detail"""
        if not self._debug and level in ("debug", "detail"):
            return
        log_method = getattr(self.logger, level, self.logger.info)
        log_method(message)
