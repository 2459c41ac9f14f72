'''The ``aslchamp`` command.

Subcommands::

    aslchamp gen-data   -o data.jsonl [--classes ...] [--signers N] [--reps N]
    aslchamp train      --data data.jsonl -o net.ckpt [--scale 1/16] [--epochs N]
    aslchamp eval       net.ckpt --data data.jsonl [--split test] [--csv FILE]
    aslchamp recognize  sample.jsonl net.ckpt [--verbose]
    aslchamp lesson-sim [--checkpoint net.ckpt | --recognizer oracle]

Exit codes: 0 success, 2 usage, 3 runtime failure, 4 invalid data.
'''
import argparse
import logging
import os
import sys
from dataclasses import replace
from fractions import Fraction

import pandas as pd

from aslchamp import __version__
from aslchamp.checkpoint import read_checkpoint, load_checkpoint
from aslchamp.datastore import FeatureStore, dataset_fingerprint
from aslchamp.errors import (AslChampError, DivergenceDetected, FormatError,
        InvalidConfig, InvalidPlan, InvalidSample, SchemaError)
from aslchamp.evaluation import (SPLIT_NAMES, SplitSpec, evaluate,
        plot_confusion, render_metrics, split_dataset)
from aslchamp.filetypes import read_dataset, write_dataset
from aslchamp.general import child_seed, thread_count
from aslchamp.gesture import CANONICAL_CLASSES, encode_dataset, sign_code
from aslchamp.lesson import (LearnerProfile, LessonPlan, oracle_recognizer,
        net_recognizer, simulate_learner, write_transcript)
from aslchamp.network import NetConfig, build_network, predict
from aslchamp.synth import DatasetSpec, generate_dataset
from aslchamp.templates import TemplateLibrary
from aslchamp.training import TrainConfig, plot_training, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_DATA = 4


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1, got {}".format(text))
    return value


def fraction(text):
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError("not a fraction: {}".format(text))
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1], got {}".format(
            text))
    return value


def probability(text):
    value = float(text)
    if not 0. <= value <= 1.:
        raise argparse.ArgumentTypeError("must lie in [0, 1], got {}".format(
            text))
    return value


def _library(args):
    return TemplateLibrary(getattr(args, 'templates', None))


def cmd_gen_data(args):
    spec = DatasetSpec(classes=tuple(args.classes), signers=args.signers,
            repetitions_per_class=args.reps, frame_rate_hz=args.frame_rate,
            duration_s=args.duration, master_seed=args.seed,
            left_handed_ratio=args.left_ratio,
            orientation_jitter_deg=args.jitter, noise_std_m=args.noise)
    ds = generate_dataset(spec, _library(args), thread_count(args.threads))
    write_dataset(ds, args.out)

    counts = pd.Series(ds.labels).value_counts().reindex(list(spec.classes),
            fill_value=0)
    for label, n in counts.items():
        print('{:<14} {}'.format(label, n))
    print('wrote {} samples to {}'.format(len(ds), args.out))
    return EXIT_OK


def _cached_arrays(net, name, part, cache):
    '''Encoded ``(X, y)`` for a split, read from or added to the cache.'''
    if len(part) == 0:
        return None
    if cache is None:
        X, y, _ = encode_dataset(part, net.class_names, net.encoding,
                net.t_max)
        return X, y
    fp = dataset_fingerprint(part, net.class_names, net.encoding, net.t_max)
    with FeatureStore(cache) as store:
        if store.has_features(name, fp):
            X, y, _, _ = store.extract_features(name)
            return X, y
        X, y, mask_len = encode_dataset(part, net.class_names, net.encoding,
                net.t_max)
        store.append_features(name, X, y, fp, mask_len, net.class_names)
    return X, y


def _report_path(args):
    if args.report:
        return args.report
    return os.path.splitext(args.out)[0] + '_report.csv'


def cmd_train(args):
    ds = read_dataset(args.data)
    threads = thread_count(args.threads)
    if args.resume:
        ckpt = read_checkpoint(args.out)
        net, state = ckpt.net, ckpt.training
        if state is None or ckpt.split is None:
            raise InvalidConfig("{} holds no training state to resume".format(
                args.out))
        split = SplitSpec.from_dict(ckpt.split)
        tc = replace(TrainConfig.from_dict(state.train_config),
                epochs=args.epochs, checkpoint_path=args.out)
    else:
        classes = tuple(sorted(set(ds.labels), key=sign_code))
        cfg = NetConfig(class_names=classes, scale_factor=args.scale,
                dropout_rate=args.dropout,
                presence_flags=args.presence_flags,
                dtype='float32' if args.float32 else 'float64')
        net = build_network(cfg, child_seed(args.seed, 'init'))
        state = None
        split = SplitSpec(unit=args.split_unit,
                seed=child_seed(args.seed, 'split'))
        tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                alpha=args.lr, seed=args.seed, patience=args.patience,
                checkpoint_path=args.out)

    train_ds, val_ds, _ = split_dataset(ds, split)
    train_data = _cached_arrays(net, 'train', train_ds, args.cache)
    val_data = _cached_arrays(net, 'val', val_ds, args.cache)
    try:
        net, report = train(net, train_data, val_data, tc, state,
                split.to_dict(), threads)
    except DivergenceDetected as exc:
        logger.error("Training diverged in epoch %d; %s keeps the last saved "
                "epoch", exc.epoch, args.out)
        return EXIT_RUNTIME

    report.write(_report_path(args), wall_clock=threads > 1)
    if args.plot:
        plot_training(report, args.plot)
    last = report.epochs - 1
    print('epochs {} loss {:.4f} acc {:.4f}'.format(report.epochs,
        report.train_loss[last], report.train_acc[last]))
    if report.val_acc[last] is not None:
        print('validation loss {:.4f} acc {:.4f}'.format(report.val_loss[last],
            report.val_acc[last]))
    print('checkpoint {} ({})'.format(args.out, report.checksum))
    return EXIT_OK


def cmd_eval(args):
    ckpt = read_checkpoint(args.checkpoint)
    ds = read_dataset(args.data)
    if args.split != 'all':
        if ckpt.split is None:
            raise InvalidConfig("{} stores no split; use --split all".format(
                args.checkpoint))
        parts = split_dataset(ds, SplitSpec.from_dict(ckpt.split))
        ds = parts[SPLIT_NAMES.index(args.split)]
    m = evaluate(ckpt.net, ds, args.batch_size, thread_count(args.threads))
    sys.stdout.write(render_metrics(m, 'text').decode('utf-8'))
    if args.csv:
        with open(args.csv, 'wb') as f:
            f.write(render_metrics(m, 'csv'))
        logger.info("Writing: metrics %s", args.csv)
    if args.plot:
        plot_confusion(m, args.plot)
    return EXIT_OK


def cmd_recognize(args):
    net = load_checkpoint(args.checkpoint)
    ds = read_dataset(args.sample)
    for sample in ds:
        p = predict(net, sample)
        print('{} {:.4f}'.format(p.label, p.confidence))
        if args.verbose:
            for label, prob in zip(p.class_names, p.distribution):
                print('  {:<14} {:.12f}'.format(label, prob))
    return EXIT_OK


def cmd_lesson_sim(args):
    if args.recognizer == 'oracle':
        recognizer = oracle_recognizer
    elif args.checkpoint:
        recognizer = net_recognizer(load_checkpoint(args.checkpoint))
    else:
        raise InvalidConfig("--recognizer net needs --checkpoint")
    plan = LessonPlan(signs=tuple(args.signs), batch_size=args.batch_size,
            capture_window_s=args.window, max_retries=args.max_retries)
    profile = LearnerProfile(base_success=args.success, gain=args.gain,
            direction_error_rate=args.direction_errors,
            handedness=args.handedness, seed=child_seed(args.seed, 'lesson'))
    state = simulate_learner(plan, recognizer, profile, _library(args))

    if args.transcript:
        write_transcript(state, args.transcript)
    for r in state.results:
        print('{:<14} attempts {} {}'.format(r.sign, r.attempts,
            'needs review' if r.needs_review else 'passed'))
    print('first try: {}/{}'.format(len(state.first_try_passes),
        len(plan.signs)))
    print('needs review: {}'.format(', '.join(state.needs_review) or 'none'))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='aslchamp',
            description='Synthetic ASL sign data, recognition and lessons.')
    parser.add_argument('--version', action='version',
            version='%(prog)s ' + __version__)
    parser.add_argument('-v', dest='loglevel', action='store_const',
            const=logging.DEBUG, default=logging.INFO,
            help='debug logging')
    parser.add_argument('-q', dest='loglevel', action='store_const',
            const=logging.WARNING, help='warnings only')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('gen-data', help='generate a synthetic dataset')
    p.add_argument('-o', '--out', required=True, help='dataset file')
    p.add_argument('--classes', nargs='+', default=list(CANONICAL_CLASSES))
    p.add_argument('--signers', type=positive_int, default=15)
    p.add_argument('--reps', type=positive_int, default=20,
            help='repetitions per class and signer')
    p.add_argument('--seed', type=int, default=42)
    p.add_argument('--left-ratio', type=probability, default=0.2)
    p.add_argument('--jitter', type=float, default=4.0,
            help='orientation jitter, degrees')
    p.add_argument('--noise', type=float, default=0.003,
            help='positional noise, meters')
    p.add_argument('--frame-rate', type=float, default=72.0)
    p.add_argument('--duration', type=float, default=3.0)
    p.add_argument('--templates', help='template library file')
    p.add_argument('--threads', type=positive_int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser('train', help='train a network')
    p.add_argument('--data', required=True, help='dataset file')
    p.add_argument('-o', '--out', required=True, help='checkpoint file')
    p.add_argument('--scale', type=fraction, default=Fraction(1, 16),
            help='width scale factor (default 1/16)')
    p.add_argument('--epochs', type=positive_int, default=200,
            help='total epochs of the run')
    p.add_argument('--batch-size', type=positive_int, default=512)
    p.add_argument('--lr', type=float, default=1e-3)
    p.add_argument('--dropout', type=float, default=0.6)
    p.add_argument('--patience', type=positive_int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--split-unit', choices=('signer', 'sample'),
            default='signer')
    p.add_argument('--presence-flags', action='store_true')
    p.add_argument('--float32', action='store_true')
    p.add_argument('--resume', action='store_true',
            help='continue from the checkpoint at --out')
    p.add_argument('--cache', help='HDF feature cache')
    p.add_argument('--report', help='report CSV (default <out>_report.csv)')
    p.add_argument('--plot', help='training curve image')
    p.add_argument('--threads', type=positive_int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='evaluate a checkpoint')
    p.add_argument('checkpoint')
    p.add_argument('--data', required=True, help='dataset file')
    p.add_argument('--split', choices=('all',) + SPLIT_NAMES, default='test')
    p.add_argument('--batch-size', type=positive_int, default=64)
    p.add_argument('--csv', help='confusion matrix CSV')
    p.add_argument('--plot', help='confusion matrix image')
    p.add_argument('--threads', type=positive_int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('recognize', help='recognize the samples in a file')
    p.add_argument('sample', help='dataset file with one or more samples')
    p.add_argument('checkpoint')
    p.add_argument('--verbose', action='store_true',
            help='print the full distribution')
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser('lesson-sim', help='simulate a learner in a lesson')
    p.add_argument('--checkpoint')
    p.add_argument('--recognizer', choices=('net', 'oracle'), default='net')
    p.add_argument('--signs', nargs='+', default=['MILK', 'TEA', 'COFFEE'])
    p.add_argument('--batch-size', type=positive_int, default=3)
    p.add_argument('--window', type=float, default=3.0,
            help='capture window, seconds')
    p.add_argument('--max-retries', type=positive_int, default=3)
    p.add_argument('--success', type=probability, default=0.7,
            help='first-attempt success probability')
    p.add_argument('--gain', type=float, default=0.15,
            help='success gain per attempt')
    p.add_argument('--direction-errors', type=probability, default=0.0)
    p.add_argument('--handedness', choices=('left', 'right'),
            default='right')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--templates', help='template library file')
    p.add_argument('--transcript', help='transcript output file')
    p.set_defaults(func=cmd_lesson_sim)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=args.loglevel, stream=sys.stderr,
            format='%(levelname)s %(name)s: %(message)s')
    logging.getLogger('aslchamp').setLevel(args.loglevel)

    try:
        return args.func(args)
    except (InvalidSample, SchemaError, FormatError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except (InvalidConfig, InvalidPlan) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (AslChampError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
