"""逐合约的分析子命令：disasm / cfg / csg / patterns / align / featurize。"""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from exdos.cli.context import CommandContext, emit_json, emit_line, read_bytecode_arg, read_text
from exdos.services.alignment_service import build_dictionary, filter_dictionary
from exdos.services.ast_document import ingest_ast
from exdos.services.cfg_builder_service import build_cfg
from exdos.services.contract_graph import BYTECODE, graph_from_dict, graph_to_dict
from exdos.services.csg_builder_service import build_contract_csg, build_csg
from exdos.services.evm_disasm_service import blocks_from_dict, blocks_to_dict, decode, disassemble
from exdos.services.featurizer_service import (
    featurize_bytecode,
    featurize_source,
    import_embeddings,
    write_features,
)
from exdos.services.pattern_engine_service import (
    annotations_from_dict,
    annotations_to_dict,
    match_bytecode_patterns,
    match_source_patterns,
    resolve_pattern_mask,
)
from exdos.utils.errors import UsageError
from exdos.utils.json_io import read_json, write_json


logger = logging.getLogger(__name__)


def _contract_id_for(value: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    path = Path(value)
    return path.name.split(".")[0] if path.is_file() else ""


def cmd_disasm(args: argparse.Namespace, ctx: CommandContext) -> int:
    instructions = decode(read_bytecode_arg(args.input), strip=not args.keep_metadata, table=ctx.opcode_table)
    if args.json:
        emit_json([ins.to_dict() for ins in instructions])
    else:
        for ins in instructions:
            data = f" 0x{ins.push_data.hex()}" if ins.push_data is not None else ""
            emit_line(f"{ins.offset:06x}  {ins.mnemonic}{data}")
    if args.blocks_out:
        blocks = disassemble(read_bytecode_arg(args.input), strip=not args.keep_metadata, table=ctx.opcode_table)
        write_json(args.blocks_out, blocks_to_dict(blocks))
    ctx.write_resolved("disasm", args)
    return 0


def cmd_cfg(args: argparse.Namespace, ctx: CommandContext) -> int:
    blocks = disassemble(read_bytecode_arg(args.bytecode), strip=not args.keep_metadata, table=ctx.opcode_table)
    graph = build_cfg(blocks, contract_id=_contract_id_for(args.bytecode, args.contract_id))
    out = write_json(ctx.output_path(args.out, "graph.json"), graph_to_dict(graph))
    if args.blocks_out:
        write_json(args.blocks_out, blocks_to_dict(blocks))
    if graph.diagnostics:
        logger.warning("cfg diagnostics | count=%s | out=%s", len(graph.diagnostics), str(out))
    ctx.write_resolved("cfg", args)
    return 0


def cmd_csg(args: argparse.Namespace, ctx: CommandContext) -> int:
    doc = ingest_ast(read_text(args.ast))
    graph = build_csg(doc, args.function) if args.function else build_contract_csg(doc, args.contract)
    write_json(ctx.output_path(args.out, "graph.json"), graph_to_dict(graph))
    ctx.write_resolved("csg", args)
    return 0


def cmd_patterns(args: argparse.Namespace, ctx: CommandContext) -> int:
    graph = graph_from_dict(read_json(args.graph))
    radius = args.radius or ctx.settings.pattern_radius
    if graph.modality == BYTECODE:
        if not args.blocks:
            raise UsageError("bytecode graphs need --blocks (written by `cfg --blocks-out`)")
        annotations = match_bytecode_patterns(
            graph, blocks_from_dict(read_json(args.blocks)), radius=radius, contract_id=args.contract_id
        )
    else:
        doc = ingest_ast(read_text(args.ast)) if args.ast else None
        annotations = match_source_patterns(graph, doc, contract_id=args.contract_id)
    if args.vulnerability:
        annotations = [a for a in annotations if a.vulnerability == args.vulnerability]
    write_json(ctx.output_path(args.out, "annotations.json"), annotations_to_dict(annotations))
    ctx.write_resolved("patterns", args)
    return 0


def cmd_align(args: argparse.Namespace, ctx: CommandContext) -> int:
    src_ann = annotations_from_dict(read_json(args.source_annotations))
    byt_ann = annotations_from_dict(read_json(args.bytecode_annotations))
    dictionary = build_dictionary(src_ann, byt_ann, contract_id=args.contract_id)
    if args.mask:
        if not args.vulnerability:
            raise UsageError("--mask needs --vulnerability to resolve sub-pattern names")
        dictionary = filter_dictionary(dictionary, resolve_pattern_mask(args.mask, args.vulnerability))
    write_json(ctx.output_path(args.out, "dict.json"), dictionary.to_dict())
    ctx.write_resolved("align", args)
    return 0


def cmd_featurize(args: argparse.Namespace, ctx: CommandContext) -> int:
    graph = graph_from_dict(read_json(args.graph))
    if args.import_embeddings:
        features = import_embeddings(
            args.import_embeddings,
            contract_id=graph.contract_id,
            modality=graph.modality,
            expected_rows=graph.node_count,
        )
    elif graph.modality == BYTECODE:
        if not args.blocks:
            raise UsageError("bytecode graphs need --blocks (written by `cfg --blocks-out`)")
        features = featurize_bytecode(blocks_from_dict(read_json(args.blocks)), graph)
    else:
        features = featurize_source(graph, ingest_ast(read_text(args.ast)) if args.ast else None)
    write_features(ctx.output_path(args.out, "features.json"), features)
    ctx.write_resolved("featurize", args)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("disasm", help="反汇编字节码")
    p.add_argument("input", help="字节码文件或十六进制串")
    p.add_argument("--keep-metadata", action="store_true", help="不剥离 solc 元数据尾部")
    p.add_argument("--json", action="store_true", help="输出 JSON 数组")
    p.add_argument("--blocks-out", help="同时写出基本块 JSON")
    p.set_defaults(handler=cmd_disasm)

    p = subparsers.add_parser("cfg", help="字节码 -> CFG")
    p.add_argument("bytecode")
    p.add_argument("--out")
    p.add_argument("--blocks-out", help="同时写出基本块 JSON（patterns / featurize 需要）")
    p.add_argument("--contract-id")
    p.add_argument("--keep-metadata", action="store_true")
    p.set_defaults(handler=cmd_cfg)

    p = subparsers.add_parser("csg", help="compact AST -> CSG")
    p.add_argument("ast")
    p.add_argument("--function", help="只构建单个函数，可写成 Contract.fn")
    p.add_argument("--contract", help="合约名（默认第一个有函数的合约）")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_csg)

    p = subparsers.add_parser("patterns", help="匹配九个子模式")
    p.add_argument("graph")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--blocks")
    group.add_argument("--ast")
    p.add_argument("--vulnerability", choices=("reentrancy", "timestamp", "infinite-loop"))
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--contract-id")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_patterns)

    p = subparsers.add_parser("align", help="构建对齐字典")
    p.add_argument("source_annotations")
    p.add_argument("bytecode_annotations")
    p.add_argument("--contract-id")
    p.add_argument("--mask", help="子模式掩码：all / none / only:P1 / without:P2 / 逗号列表")
    p.add_argument("--vulnerability", choices=("reentrancy", "timestamp", "infinite-loop"))
    p.add_argument("--out")
    p.set_defaults(handler=cmd_align)

    p = subparsers.add_parser("featurize", help="节点初始特征")
    p.add_argument("graph")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--blocks")
    group.add_argument("--ast")
    p.add_argument("--import-embeddings", help="外部嵌入文件（JSON 头 + id<TAB>向量）")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_featurize)
