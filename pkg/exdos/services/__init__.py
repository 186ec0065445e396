"""流水线各阶段服务。"""
