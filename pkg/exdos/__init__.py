"""ExDoS：字节码智能合约漏洞检测（专家模式引导的双焦点跨模态蒸馏）。"""

__version__ = "0.1.0"
