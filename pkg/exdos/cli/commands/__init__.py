"""子命令分组：每个模块提供 register(subparsers)。"""
