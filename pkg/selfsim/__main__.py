import os
import sys
import logging
import argparse
import numpy as np
from .version import __version__
from .errors import (ArtifactError, DomainError, EvaluationError, ExtrapolationError, QuadratureError)
from .exact import delta_weight, green_regular
from .kernel import ExponentTable, KernelParams, TableConfig, default_cache_dir
from .meshes import LinearMesh, LogMesh
from .quadrature import OUTER_DEFAULT
from .sweep import (SweepSpec, TaskStatus, aggregate, export_figure_data, load_report, plan, run, run_task,
                    task_status)
from .tables import format_float

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3
NUMERIC_ERRORS = (DomainError, QuadratureError, ExtrapolationError, EvaluationError)
IO_ERRORS = (ArtifactError, OSError)


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def mesh_argument(text):
    try:
        return LogMesh.from_descriptor(text)
    except DomainError as e:
        raise argparse.ArgumentTypeError(e.message)


class Tool:
    name = None
    help = None

    def __init__(self, parser):
        self.cache_dir = default_cache_dir()

    def run(self, args):
        return self.handle(args)

    def handle(self, args):
        raise NotImplementedError()


class SolveTool(Tool):
    name = 'solve'
    help = 'regular part of the Green\'s function and the weight of its delta part at one point'

    def __init__(self, parser):
        super().__init__(parser)
        parser.add_argument('--gamma', type=float, required=True, help='power-law exponent, 0 < gamma < 2')
        parser.add_argument('--t', type=float, required=True, help='time in units of the waiting time')
        parser.add_argument('--x', type=float, required=True, help='position')
        parser.add_argument('--rel-tol', type=float, default=OUTER_DEFAULT.rel_tol, help='outer relative tolerance')
        parser.add_argument('--table', action='store_true',
                            help='use the cached exponent table instead of direct quadrature')

    def handle(self, args):
        params = KernelParams(args.gamma)
        exponent = None
        if args.table:
            exponent = ExponentTable.build(params, max(args.t, 1.0), cache_dir=self.cache_dir)
        value = green_regular(params, args.x, args.t, OUTER_DEFAULT.replace(rel_tol=args.rel_tol), exponent)
        print('f_reg', format_float(value))
        print('delta_weight', format_float(delta_weight(args.t)))


class GTableTool(Tool):
    name = 'gtable'
    help = 'tabulate the characteristic exponent G(p)'

    def __init__(self, parser):
        super().__init__(parser)
        parser.add_argument('--gamma', type=float, required=True, help='power-law exponent, 0 < gamma < 2')
        parser.add_argument('--t-max', type=float, default=1e6, help='largest time the table must serve')
        parser.add_argument('--points-per-decade', type=int, default=TableConfig.points_per_decade)
        parser.add_argument('--p-max', type=float, default=TableConfig.p_max)
        parser.add_argument('--output', '-o', help='CSV file to write (default: stdout)')

    def handle(self, args):
        params = KernelParams(args.gamma)
        cfg = TableConfig(points_per_decade=args.points_per_decade, p_max=args.p_max)
        table = ExponentTable.build(params, args.t_max, cfg=cfg, cache_dir=self.cache_dir)
        if args.output:
            table.save(args.output)
            return
        print(','.join(table.columns))
        np.savetxt(sys.stdout, np.column_stack([table.p, table.g, table.one_minus_g]), fmt='%.17g', delimiter=',')


class PipelineTool(Tool):

    def __init__(self, parser):
        super().__init__(parser)
        parser.add_argument('--gamma', type=float, required=True, help='power-law exponent, 0 < gamma < 2')
        parser.add_argument('--t-mesh', type=mesh_argument, default='30:1000000.0:100', help='lo:hi:points_per_decade')
        parser.add_argument('--s-mesh', type=mesh_argument, default='0.01:1000.0:25', help='lo:hi:points_per_decade')
        parser.add_argument('--output-dir', default='selfsim-output', help='directory for task artifacts')
        parser.add_argument('--parallelism', type=int, default=os.cpu_count() or 1, help='worker processes')

    def pipeline(self, args):
        gamma = round(args.gamma, 2)
        single = LinearMesh(gamma, gamma, 0.01, np.array([gamma]))
        spec = SweepSpec(single, args.t_mesh, args.s_mesh, output_dir=args.output_dir, parallelism=args.parallelism)
        result = task_status(spec, gamma)
        if result.status is not TaskStatus.DONE:
            result = run_task(spec, gamma, workers=spec.parallelism)
        report, _ = load_report(spec.output_dir, result.to_dict())
        return report, result


class ReconstructTool(PipelineTool):
    name = 'reconstruct'
    help = 'run the exact field, Q reconstruction and accuracy pipeline for one gamma'

    def handle(self, args):
        report, result = self.pipeline(args)
        print('alpha_fitted', format_float(report.alpha_fitted))
        print('alpha_closed', format_float(report.alpha_closed))
        print('alpha_axis', format_float(report.alpha_axis))
        print('t10', 'not-reached' if report.t10 is None else format_float(report.t10))
        for name, path in sorted(result.paths.items()):
            print(name, path)


class BoundaryTool(PipelineTool):
    name = 'boundary'
    help = 'print the time after which the automodel density stays within 10%% of the exact one'

    def handle(self, args):
        report, _ = self.pipeline(args)
        print('t10', 'not-reached' if report.t10 is None else format_float(report.t10))
        print('t_star', format_float(report.t_star))
        print('s_star', format_float(report.s_star))
        print('max_error_after_t10', format_float(report.max_error_after_t10))


class SweepTool(Tool):
    name = 'sweep'
    help = 'run every gamma task of a sweep spec and aggregate the results'

    def __init__(self, parser):
        super().__init__(parser)
        parser.add_argument('--spec', required=True, help='sweep spec (JSON)')
        parser.add_argument('--parallelism', type=int, help='override the worker count of the spec')
        parser.add_argument('--output-dir', help='override the output directory of the spec')
        parser.add_argument('--only-gamma', type=float, help='run the single task for this gamma and stop')

    def handle(self, args):
        spec = SweepSpec.load(args.spec)
        if args.parallelism is not None:
            spec.parallelism = args.parallelism
        if args.output_dir is not None:
            spec.output_dir = args.output_dir
        if args.only_gamma is not None:
            gamma = round(args.only_gamma, 2)
            if all(abs(g - gamma) > 1e-9 for g in spec.gamma_mesh):
                raise DomainError(f'gamma {gamma} is not on the mesh of {args.spec}')
            result = run_task(spec, gamma, workers=spec.parallelism)
            print(result.label, result.status.value)
            return EXIT_OK
        tasks = run(spec, plan(spec))
        for task in tasks:
            print(task.label, task.status.value)
        if any(task.status is TaskStatus.DONE for task in tasks):
            aggregate(spec.output_dir)
        return EXIT_OK if all(task.status is TaskStatus.DONE for task in tasks) else EXIT_NUMERIC


class ExportFig2Tool(Tool):
    name = 'export-fig2'
    help = 'write the boundary curve t10(gamma) as fig2.csv'

    def __init__(self, parser):
        super().__init__(parser)
        parser.add_argument('--output-dir', required=True, help='directory of an aggregated sweep')

    def handle(self, args):
        for path in export_figure_data(args.output_dir, 'fig2'):
            print(path)


class ExportFig345Tool(Tool):
    name = 'export-fig345'
    help = 'write per-gamma Q, normalized Q and ratio tables for t >= t10'

    def __init__(self, parser):
        super().__init__(parser)
        parser.add_argument('--output-dir', required=True, help='directory of a sweep')
        parser.add_argument('--gamma', type=float, action='append', help='restrict to this gamma (repeatable)')

    def handle(self, args):
        for path in export_figure_data(args.output_dir, 'fig345', gammas=args.gamma):
            print(path)


COMMAND_CLASSES = (
    SolveTool,
    GTableTool,
    ReconstructTool,
    BoundaryTool,
    SweepTool,
    ExportFig2Tool,
    ExportFig345Tool,
)


class CLITool:
    def __init__(self, argv, command_classes=COMMAND_CLASSES):
        self.parser = None
        self.subparsers = None
        self.argv = argv
        self.args = None
        self.commands = dict()
        self.setup(command_classes)

    def setup(self, command_classes):
        # Base parser
        self.parser = UsageParser(prog='selfsim')
        self.parser.add_argument('--log', action='store_true', help='log progress at INFO level')
        self.subparsers = self.parser.add_subparsers(title='commands', dest='command')

        # Internal commands
        self.subparsers.add_parser('version', help='print out version number')

        # External commands
        for cls in command_classes:
            subparser = self.subparsers.add_parser(cls.name, help=cls.help)
            self.commands[cls.name] = cls(subparser)

    def command_version(self):
        print('selfsim', __version__)

    def run(self):
        # Run parser
        self.args = self.parser.parse_args(self.argv[1:])
        logging.basicConfig(level=logging.INFO if self.args.log else logging.WARNING,
                            format='%(asctime)s %(levelname)s %(name)s: %(message)s')

        # Handle internal commands
        internal = [s.split('_', 1)[1] for s in dir(self) if s.startswith('command_')]
        if self.args.command in internal:
            return getattr(self, 'command_' + self.args.command)()

        # Handle external commands
        if self.args.command is None:
            self.parser.error('command not given. Use the -h flag for a list.')
        return self.commands[self.args.command].run(self.args)


def main(argv=None):
    argv = sys.argv if argv is None else argv
    try:
        status = CLITool(argv).run()
    except NUMERIC_ERRORS as e:
        print(f'Error: {e}', file=sys.stderr)
        return EXIT_NUMERIC
    except IO_ERRORS as e:
        print(f'Error: {e}', file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if status is None else status


# Run tool
if __name__ == '__main__':
    sys.exit(main())
