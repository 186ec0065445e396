"""数值核心：自动微分、DAGN 模型、优化器与 checkpoint。"""
