from __future__ import annotations

from dotenv import load_dotenv
load_dotenv()  # 加载 .env 环境变量，必须在读取 Settings 之前执行

import argparse
import logging
import sys
from typing import NoReturn, Sequence

from exdos import __version__
from exdos.cli.commands import corpus_commands, detect_commands, graph_commands, train_commands
from exdos.cli.context import CommandContext
from exdos.config.exdos_settings import load_settings
from exdos.utils.errors import EXIT_USAGE, ExdosError, UsageError
from exdos.utils.logging_config import configure_logging


logger = logging.getLogger("exdos.cli")

COMMAND_GROUPS = (graph_commands, corpus_commands, train_commands, detect_commands)


class ExdosArgumentParser(argparse.ArgumentParser):
    """参数错误抛 UsageError，由 run() 统一映射退出码（argparse 默认是 exit 2）。"""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ExdosArgumentParser:
    parser = ExdosArgumentParser(
        prog="exdos",
        description="字节码智能合约漏洞检测：CFG/CSG 建图、专家子模式、跨模态蒸馏训练与检测",
    )
    parser.add_argument("--version", action="version", version=f"exdos {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="随机种子（默认取 EXDOS_SEED，再退回 7）")
    parser.add_argument("--out-dir", default=None, help="输出目录（默认取 EXDOS_OUT_DIR，再退回 runs/）")
    parser.add_argument(
        "--log-level",
        default=None,
        type=str.upper,
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
    )
    parser.add_argument("--threads", type=int, default=None, help="按合约并行的线程数")

    subparsers = parser.add_subparsers(dest="command", metavar="<command>")
    for group in COMMAND_GROUPS:
        group.register(subparsers)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """CLI 入口：0 成功 / 1 用法错误 / 2 输入格式错误 / 3 数值错误。"""

    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)

    if getattr(args, "handler", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    settings = load_settings()
    configure_logging(args.log_level or settings.log_level)
    try:
        ctx = CommandContext.from_args(args, settings)
        logger.debug("command start | command=%s | seed=%s | out_dir=%s", args.command, ctx.seed, str(ctx.out_dir))
        return int(args.handler(args, ctx))
    except ExdosError as exc:
        logger.error("command failed | command=%s | error=%s", args.command, exc)
        return exc.exit_code
