# cli.py
"""
Command-line entry point: prepare, bpe-train, pretrain, finetune, generate,
evaluate, sweep and oracle-check
"""
import argparse
import logging
import sys

from xdlm_pipeline.config.run_config import RunConfig
from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.exceptions import XdlmError
from xdlm_pipeline.processors.pipeline import TranslationPipeline
from xdlm_pipeline.utils.file_utils import FileUtils


class CommandError(Exception):
    """Raised by the parser instead of exiting, so every failure prints one 'error:' line."""


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CommandError(message)


def _key_value(text):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _int_list(text):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common_options():
    common = Parser(add_help=False)
    common.add_argument('--profile', choices=sorted(Config.PROFILES), default='toy')
    common.add_argument('--config', help='key = value file applied over the profile')
    common.add_argument('--set', dest='overrides', action='append', type=_key_value, default=[],
                        metavar='KEY=VALUE', help='override one config key (repeatable)')
    common.add_argument('--seed', type=int, help='single seed all randomness derives from')
    common.add_argument('--output-dir', default='runs', help='directory for logs, reports and checkpoints')
    return common


def _corpus_options(parser):
    parser.add_argument('--source', help='source-side text file, one sentence per line')
    parser.add_argument('--target', help='target-side text file, line-aligned with --source')
    parser.add_argument('--tsv', help='single source<TAB>target file instead of --source/--target')
    parser.add_argument('--source-lang', default='src')
    parser.add_argument('--target-lang', default='tgt')


def _tokenizer_options(parser):
    parser.add_argument('--bpe', required=True, help='merge file written by bpe-train')
    parser.add_argument('--vocab', required=True, help='vocabulary file written by bpe-train')


def build_parser():
    common = _common_options()
    parser = Parser(prog='xdlm', description='Cross-lingual diffusion translation pipeline')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=Parser)

    prepare = commands.add_parser('prepare', parents=[common], help='validate and describe corpora')
    _corpus_options(prepare)
    prepare.add_argument('--synth', choices=['copy', 'mapping'], help='write a synthetic corpus to data/')
    prepare.add_argument('--n-pairs', type=int, default=5000)
    prepare.add_argument('--n-valid', type=int, default=500)
    prepare.add_argument('--n-test', type=int, default=500)
    prepare.add_argument('--min-len', type=int, default=1)
    prepare.add_argument('--max-len', type=int, default=8)
    prepare.add_argument('--alphabet-size', type=int, default=8)

    bpe = commands.add_parser('bpe-train', parents=[common], help='fit BPE merges and the vocabulary')
    _corpus_options(bpe)

    for name, help_text in (('pretrain', 'TDLM pretraining'), ('finetune', 'translation training')):
        train = commands.add_parser(name, parents=[common], help=help_text)
        _corpus_options(train)
        _tokenizer_options(train)
        train.add_argument('--steps', type=int, help='optimizer steps (default: train_steps)')
        train.add_argument('--init-checkpoint', help='start from this checkpoint file or the latest in this directory')
        if name == 'finetune':
            train.add_argument('--from-scratch', action='store_true',
                               help='allow fine-tuning without --init-checkpoint')

    generate = commands.add_parser('generate', parents=[common], help='decode a source file')
    _tokenizer_options(generate)
    generate.add_argument('--checkpoint', required=True, help='checkpoint file, or a directory to use its latest')
    generate.add_argument('--input', default='-', help="source file, '-' for standard input")
    generate.add_argument('--output', help='hypothesis file (default: standard output)')
    generate.add_argument('--iterations', type=int, help='reverse steps (<= T)')
    generate.add_argument('--trace', help='write per-iteration states to this file')
    generate.add_argument('--source-lang')
    generate.add_argument('--target-lang')

    evaluate = commands.add_parser('evaluate', parents=[common], help='score hypotheses')
    evaluate.add_argument('--hypotheses', required=True)
    evaluate.add_argument('--references', required=True)
    evaluate.add_argument('--bpe', help='merge file, needed for bpe mode')
    evaluate.add_argument('--mode', choices=['word', 'bpe', 'both'], default='both')

    sweep = commands.add_parser('sweep', parents=[common], help='BLEU against the number of iterations')
    _corpus_options(sweep)
    _tokenizer_options(sweep)
    sweep.add_argument('--checkpoint', required=True, help='checkpoint file, or a directory to use its latest')
    sweep.add_argument('--iterations', type=_int_list, default=[1, 2, 5, 10, 20],
                       help='comma-separated iteration counts')
    sweep.add_argument('--schedule-table', action='store_true', help='also dump the schedule table CSV')

    oracle = commands.add_parser('oracle-check', parents=[common], help='enumeration check of the sampler')
    oracle.add_argument('--max-vocab', type=int, default=5)
    oracle.add_argument('--max-length', type=int, default=3)
    oracle.add_argument('--max-T', type=int, default=4)
    return parser


def _corpus(args, split="train"):
    return TranslationPipeline.load_corpus(args.source, args.target, args.tsv,
                                           args.source_lang, args.target_lang, split)


def _read_sources(path):
    if path == '-':
        return [line.rstrip("\n") for line in sys.stdin]
    FileUtils.require_paths(path)
    with open(path, encoding='utf-8') as f:
        return [line.rstrip("\n") for line in f]


def run(args):
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.config:
        FileUtils.require_paths(args.config)
    run_config = RunConfig.resolve(args.profile, args.config, overrides)
    pipeline = TranslationPipeline(run_config, args.output_dir)

    if args.command == 'prepare':
        corpus = None if args.synth else _corpus(args)
        pipeline.prepare(corpus, args.synth, args.n_pairs, args.n_valid, args.n_test,
                         args.min_len, args.max_len, args.alphabet_size, args.source_lang, args.target_lang)
        return 0
    if args.command == 'bpe-train':
        pipeline.bpe_train([_corpus(args)])
        return 0
    if args.command in ('pretrain', 'finetune'):
        task = 'tdlm' if args.command == 'pretrain' else 'finetune'
        pipeline.train(task, _corpus(args), args.bpe, args.vocab, args.init_checkpoint,
                       getattr(args, 'from_scratch', False), args.steps)
        return 0
    if args.command == 'generate':
        pipeline.generate(args.checkpoint, args.bpe, args.vocab, _read_sources(args.input), args.output,
                          args.trace, args.source_lang, args.target_lang, args.iterations)
        return 0
    if args.command == 'evaluate':
        pipeline.evaluate(args.hypotheses, args.references, args.bpe, args.mode)
        return 0
    if args.command == 'sweep':
        pipeline.sweep(args.checkpoint, args.bpe, args.vocab, _corpus(args, "test"), args.iterations,
                       args.schedule_table)
        return 0
    if args.command == 'oracle-check':
        violations = pipeline.oracle_check(args.max_vocab, args.max_length, args.max_T)
        if violations:
            print(f"error: oracle found {len(violations)} violations", file=sys.stderr)
            return 1
        return 0
    raise CommandError(f"unknown command {args.command!r}")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return run(args)
    except (CommandError, XdlmError, ValueError, OSError) as e:
        if logging.getLogger().hasHandlers():
            logging.error(f"Command failed: {e}", exc_info=True)
        message = " ".join(str(e).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
