"""Command-line entry point.

Exit status: 0 success, 1 usage or configuration error, 2 bad input data,
3 runtime failure (policy, network, planning).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

from . import __version__
from .ablation import ablation_table, run_ablation
from .config import ConfigError, add_config_flags, config_from_args
from .corpus import load_bundled
from .entropy import EmptyProfile
from .grammar import GrammarError, chunk_text
from .hpac import derive_seed
from .ids import (InvalidTrajectory, build_dataset, chunk_episode, compute_stats, dumps_record,
                  read_trajectories, write_records)
from .metrics import EmptyCorpus, aggregate, format_table
from .serve import ProtocolError, ServerConfig, client_run, start_server
from .sim.episode import make_worlds, read_episode_log, write_episode_log
from .sim.planner import Unreachable
from .sim.policy import PolicyFailure
from .sim.world import WorldFormatError, parse_world

log = logging.getLogger("chunknav")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _read_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _trajectories(path):
    if path is None:
        return load_bundled()
    text = _read_lines(path)
    trajs = read_trajectories(text.splitlines())
    if not trajs:
        raise DataError(f"{path}: no trajectories")
    return trajs


def _world(path):
    try:
        return parse_world(_read_lines(path))
    except (WorldFormatError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


# -- commands ----------------------------------------------------------------

def cmd_chunk(args, cfg):
    trajs = _trajectories(args.input)
    units, hpac = cfg.units(), cfg.hpac()
    records = []
    for traj in trajs:
        chunked = chunk_episode(traj, hpac, units)
        for i, (chunk, (start, end)) in enumerate(zip(chunked.chunks, chunked.boundaries)):
            records.append({
                "episode_id": traj.episode_id,
                "chunk_index": i,
                "start_index": start,
                "end_index": end,
                "text": chunk_text(chunk, units),
                "sub_chunks": [[sc.action.value, sc.count] for sc in chunk.sub_chunks],
            })
    records.sort(key=lambda r: (r["episode_id"], r["start_index"]))
    with _open_out(args.output) as fh:
        write_records(records, fh)
    log.info("%d chunks from %d trajectories", len(records), len(trajs))


def cmd_build_ids(args, cfg):
    trajs = _trajectories(args.input)
    triplets, samples = build_dataset(trajs, cfg.hpac(), cfg.units(), cfg.k_max)
    with _open_out(args.triplets) as fh:
        write_records(triplets, fh)
    if args.samples:
        with _open_out(args.samples) as fh:
            write_records(samples, fh)
    log.info("%d triplets, %d samples", len(triplets), len(samples))


def cmd_stats(args, cfg):
    if args.entropy:
        episodes = _episodes(args.entropy)
        with _open_out(args.output) as fh:
            for ep in episodes:
                for i, q in enumerate(ep.queries):
                    fh.write(dumps_record({
                        "episode_id": ep.episode_id,
                        "query_index": i,
                        "mode": ep.mode,
                        "H": q.entropies,
                        "t_star": q.t_star,
                        "executed": q.chunks[:q.t_star],
                    }) + "\n")
        return
    triplets, _ = build_dataset(_trajectories(args.input), cfg.hpac(), cfg.units(), cfg.k_max)
    stats = compute_stats(triplets)
    if args.output:
        with _open_out(args.output) as fh:
            fh.write(json.dumps(stats.to_record(), sort_keys=True, indent=2) + "\n")
    sys.stdout.write(stats.summary())


def _episodes(path):
    try:
        episodes = read_episode_log(_read_lines(path).splitlines())
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not episodes:
        raise DataError(f"{path}: no episodes")
    return episodes


def _report_rows(episodes, eta_mode):
    by_mode: dict[str, list] = {}
    for ep in episodes:
        by_mode.setdefault(ep.mode or "-", []).append(ep)
    return [(mode, aggregate(eps, eta_mode)) for mode, eps in by_mode.items()]


def cmd_eval(args, cfg):
    rows = _report_rows(_episodes(args.input), cfg.eta_mode)
    if args.output:
        doc = {mode: r.to_dict() for mode, r in rows}
        with _open_out(args.output) as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    sys.stdout.write(format_table(rows))


def cmd_simulate(args, cfg):
    if args.world:
        worlds = [("world", _world(args.world))]
    else:
        worlds = make_worlds(cfg.episodes, cfg.seed, **cfg.world_kwargs())
    seeds = [cfg.seed + i for i in range(cfg.n_seeds)]
    rows, results = run_ablation(worlds, cfg.exec_modes(), seeds, cfg.policy, cfg.units(),
                                 cfg.hpac(), cfg.noise(), cfg.k_max, cfg.eta_mode)
    if args.output:
        with _open_out(args.output) as fh:
            write_episode_log(results, fh)
    title = f"policy={cfg.policy} episodes={len(worlds)} seeds={len(seeds)}"
    sys.stdout.write(ablation_table(rows, title))


def cmd_serve(args, cfg):
    modes = cfg.exec_modes()
    if len(modes) != 1:
        raise UsageError("serve takes exactly one exec mode")
    server_cfg = ServerConfig(cfg.policy, modes[0], cfg.units(), cfg.hpac(), cfg.noise(),
                              cfg.k_max, cfg.seed)
    server, thread = start_server(cfg.host, cfg.port, server_cfg)
    host, port = server.server_address[:2]
    print(f"serving on {host}:{port}", file=sys.stderr, flush=True)
    try:
        thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()


def cmd_client(args, cfg):
    if args.world:
        worlds = [("world", _world(args.world))]
    else:
        worlds = make_worlds(cfg.episodes, cfg.seed, **cfg.world_kwargs())
    address = (cfg.host, cfg.port)
    results = []
    session_log = open(args.session_log, "w", encoding="utf-8") if args.session_log else None
    try:
        for episode_id, world in worlds:
            seed = derive_seed(cfg.seed, episode_id)
            results.append(client_run(address, world, args.instruction, episode_id, seed,
                                      cfg.units(), cfg.timeout, session_log, mode="remote"))
    finally:
        if session_log is not None:
            session_log.close()
        if args.output and results:
            with _open_out(args.output) as fh:
                write_episode_log(results, fh)
    sys.stdout.write(format_table([("remote", aggregate(results, cfg.eta_mode))]))


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chunknav", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        add_config_flags(p)
        return p

    p = command("chunk", cmd_chunk, "chunk trajectories with HPAC, one record per chunk")
    p.add_argument("--input", "-i", help="trajectory file (default: bundled synthetic corpus)")
    p.add_argument("--output", "-o", help="chunk records (default: stdout)")

    p = command("build-ids", cmd_build_ids, "build inverse-dynamics triplets and navigation samples")
    p.add_argument("--input", "-i", help="trajectory file (default: bundled synthetic corpus)")
    p.add_argument("--triplets", "-o", help="triplet records (default: stdout)")
    p.add_argument("--samples", help="navigation sample records")

    p = command("stats", cmd_stats, "chunk-size statistics, or entropy profiles of an episode log")
    p.add_argument("--input", "-i", help="trajectory file (default: bundled synthetic corpus)")
    p.add_argument("--output", "-o", help="statistics document or entropy profile records")
    p.add_argument("--entropy", metavar="EPISODE_LOG",
                   help="dump per-query entropy profiles from an episode log instead")

    p = command("eval", cmd_eval, "score an episode log (one table row per execution mode)")
    p.add_argument("--input", "-i", required=True, help="episode log")
    p.add_argument("--output", "-o", help="metric report document")

    p = command("simulate", cmd_simulate,
                "run episodes for each exec mode (comma-separated) and print the metric table")
    p.add_argument("--world", help="world file (default: random worlds from the seed)")
    p.add_argument("--output", "-o", help="episode log")

    command("serve", cmd_serve, "serve chunk predictions over TCP")

    p = command("client", cmd_client, "run episodes against a server")
    p.add_argument("--world", help="world file (default: random worlds from the seed)")
    p.add_argument("--instruction", default="go to the goal", help="instruction text")
    p.add_argument("--output", "-o", help="episode log")
    p.add_argument("--session-log", help="request/response trace")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"chunknav: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"chunknav: seed {cfg.seed}", file=sys.stderr)
    try:
        args.func(args, cfg)
    except UsageError as exc:
        print(f"chunknav: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidTrajectory, GrammarError, WorldFormatError, EmptyCorpus,
            EmptyProfile, json.JSONDecodeError) as exc:
        print(f"chunknav: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PolicyFailure, ProtocolError, Unreachable, OSError) as exc:
        print(f"chunknav: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
