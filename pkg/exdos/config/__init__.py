"""exdos 配置模块。"""
