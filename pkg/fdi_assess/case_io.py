'''
Reading, writing and checking power-system case files.

The supported input is the subset of the MATPOWER case format that a DC
model needs::

    function mpc = case3
    mpc.baseMVA = 100;
    mpc.bus = [
        1  3  0    ...;   % bus id, type, Pd, ...
    ];
    mpc.gen = [ ... ];     % bus, Pg, Qg, Qmax, Qmin, Vg, mBase, status, Pmax, Pmin
    mpc.branch = [ ... ];  % fbus, tbus, r, x, b, rateA, rateB, rateC, ratio, angle, status
    mpc.gencost = [ ... ]; % model, startup, shutdown, n, coefficients

Only linear generator costs are accepted (a polynomial model whose
nonlinear coefficients are all zero). Out-of-service branches and generators
are dropped while parsing. A branch with ``rateA == 0`` is unconstrained and
gets ``rating = inf``.

:any:`parse_case` turns text into a :any:`NetworkCase`, :any:`format_case`
goes the other way, :any:`validate_case` lists invariant violations.
'''

import logging
import math
import re
from importlib import resources
from pathlib import Path, PurePath

import attr
import networkx as nx
import numpy as np

__all__ = [
    'Bus',
    'Branch',
    'Generator',
    'NetworkCase',
    'CaseError',
    'CaseSyntaxError',
    'CaseSemanticError',
    'UnsupportedCaseFeature',
    'parse_case',
    'format_case',
    'load_case',
    'validate_case',
    'scale_ratings',
    'find_radial_generator_lines',
    'BUNDLED_CASES',
]

L = lambda: logging.getLogger(__name__)

BUNDLED_CASES = ('case2', 'case3', 'case6')

REF_BUS_TYPE = 3


class CaseError(ValueError):
    '''Base class for everything that can go wrong reading a case.'''


class CaseSyntaxError(CaseError):
    '''Text does not follow the supported format. Carries ``line`` and ``column`` (1-based).'''
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = 'line %d, column %d: %s' % (line, column or 1, message)
        super().__init__(message)
        self.line = line
        self.column = column


class CaseSemanticError(CaseError):
    '''Well-formed text describing an impossible network. ``bus`` names the culprit, if any.'''
    def __init__(self, message, bus=None):
        super().__init__(message)
        self.bus = bus


class UnsupportedCaseFeature(CaseError):
    '''The case uses something outside the supported subset (e.g. quadratic costs).'''


@attr.s(frozen=True)
class Bus:
    id = attr.ib()
    # MATPOWER bus type; 3 marks the reference bus
    bus_type = attr.ib(default=1)
    # active load, MW
    load = attr.ib(default=0.0)


@attr.s(frozen=True)
class Branch:
    from_bus = attr.ib()
    to_bus = attr.ib()
    # series reactance, p.u.
    reactance = attr.ib()
    # MW; inf means unconstrained
    rating = attr.ib(default=math.inf)

    @property
    def rated(self):
        return math.isfinite(self.rating)


@attr.s(frozen=True)
class Generator:
    bus = attr.ib()
    pmin = attr.ib(default=0.0)
    pmax = attr.ib(default=0.0)
    # linear cost coefficient, $/MWh
    cost = attr.ib(default=0.0)


@attr.s(frozen=True)
class NetworkCase:
    '''Immutable DC network model.

    Buses, branches and generators are tuples; their positions are the
    indices used by every matrix in the package (line ``k`` is
    ``branches[k]``). ``reference_bus`` is a bus *id*.

    The array-valued properties are recomputed on access; hold on to them in
    tight loops.
    '''
    base_mva = attr.ib(default=100.0)
    buses = attr.ib(default=(), converter=tuple)
    branches = attr.ib(default=(), converter=tuple)
    generators = attr.ib(default=(), converter=tuple)
    reference_bus = attr.ib(default=None)
    name = attr.ib(default='case', eq=False)

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_branch(self):
        return len(self.branches)

    @property
    def n_gen(self):
        return len(self.generators)

    @property
    def bus_index(self):
        '''Maps bus id to row/column position.'''
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @property
    def loads(self):
        return np.array([bus.load for bus in self.buses], dtype=float)

    @property
    def ratings(self):
        return np.array([br.rating for br in self.branches], dtype=float)

    @property
    def rated_lines(self):
        '''Indices of lines with a finite rating (the only possible targets).'''
        return [k for k, br in enumerate(self.branches) if br.rated]

    @property
    def pmin(self):
        return np.array([g.pmin for g in self.generators], dtype=float)

    @property
    def pmax(self):
        return np.array([g.pmax for g in self.generators], dtype=float)

    @property
    def costs(self):
        return np.array([g.cost for g in self.generators], dtype=float)

    @property
    def gen_bus_matrix(self):
        '''``G_B``: n_bus x n_gen incidence, one 1 per column.'''
        G = np.zeros((self.n_bus, self.n_gen))
        index = self.bus_index
        for g, gen in enumerate(self.generators):
            G[index[gen.bus], g] = 1.0
        return G

    @property
    def load_buses(self):
        '''Indices of buses with nonzero load.'''
        return [i for i, bus in enumerate(self.buses) if bus.load != 0]

    @property
    def reference_index(self):
        return self.bus_index[self.reference_bus]

    def with_reference(self, bus_id):
        '''Copy with another reference bus.'''
        if bus_id not in self.bus_index:
            raise CaseSemanticError('Reference bus %r does not exist' % (bus_id,), bus=bus_id)
        return attr.evolve(self, reference_bus=bus_id)


# ---- tokenizer --------------------------------------------------------------

# (name, regex, human-readable explanation)
grammar = [
    ('function', r'function\s+(?:\w+\s*=\s*)?\w+\s*;?\s*$', '"function mpc = name"'),
    ('matrix', r'mpc\.(?P<name>\w+)\s*=\s*\[(?P<rest>.*)$', '"mpc.name = [ rows ];"'),
    ('cell', r'mpc\.(?P<name>\w+)\s*=\s*\{(?P<rest>.*)$', '"mpc.name = { ... };"'),
    ('scalar', r'''mpc\.(?P<name>\w+)\s*=\s*(?P<value>'[^']*'|[^;]+?)\s*;?\s*$''', '"mpc.name = value;"'),
]

_re_number = re.compile(r'[-+]?(?:\d+\.?\d*|\.\d+)(?:[eEdD][-+]?\d+)?|[-+]?(?:Inf|inf|NaN|nan)')


def _strip_comment(line):
    # '%' inside a quoted string is not a comment
    in_quote = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_quote = not in_quote
        elif ch == '%' and not in_quote:
            return line[:i]
    return line


def _parse_number(token, line, column):
    m = _re_number.fullmatch(token)
    if not m:
        raise CaseSyntaxError('Expected a number, found %r' % token, line, column)
    value = float(token.replace('d', 'e').replace('D', 'e'))
    if math.isnan(value):
        raise CaseSyntaxError('NaN is not allowed', line, column)
    return value


def _matrix_rows(segments):
    '''Split the text inside ``[ ... ]`` into rows of (value, line, column).

    ``segments`` is a list of ``(lineno, column_offset, text)``. Rows end at
    ``;`` or at the end of a source line.
    '''
    rows = []
    for lineno, offset, text in segments:
        row = []
        for m in re.finditer(r'[^\s,;]+|;', text):
            token = m.group(0)
            if token == ';':
                if row:
                    rows.append(row)
                row = []
                continue
            col = offset + m.start() + 1
            row.append((_parse_number(token, lineno, col), lineno, col))
        if row:
            rows.append(row)
    return rows


def _tokenize(text):
    '''Returns ``(scalars, matrices)``.

    ``scalars``: name -> (value text, line). ``matrices``: name -> (rows, line),
    rows as produced by `_matrix_rows`.
    '''
    scalars = {}
    matrices = {}
    lines = text.splitlines()
    lineno = 0
    while lineno < len(lines):
        raw = lines[lineno]
        lineno += 1
        line = _strip_comment(raw)
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        for name, regex, _ in grammar:
            m = re.match(regex, stripped)
            if m:
                break
        else:
            raise CaseSyntaxError(
                'Cannot read statement %r; expected one of %s'
                % (stripped, ', '.join(expl for _, _, expl in grammar)),
                lineno, indent + 1,
            )
        if name == 'function':
            continue
        if name == 'scalar':
            scalars[m.group('name')] = (m.group('value').strip(), lineno)
            continue
        closing = ']' if name == 'matrix' else '}'
        start_line = lineno
        rest = m.group('rest')
        offset = indent + m.start('rest')
        segments = []
        while True:
            pos = rest.find(closing)
            if pos >= 0:
                segments.append((lineno, offset, rest[:pos]))
                trailing = rest[pos + 1:].strip()
                if trailing not in ('', ';'):
                    raise CaseSyntaxError(
                        'Unexpected text %r after %r' % (trailing, closing),
                        lineno, offset + pos + 2,
                    )
                break
            segments.append((lineno, offset, rest))
            if lineno >= len(lines):
                raise CaseSyntaxError(
                    'Unterminated mpc.%s (missing %r)' % (m.group('name'), closing),
                    start_line, 1,
                )
            rest = _strip_comment(lines[lineno])
            offset = 0
            lineno += 1
        if name == 'matrix':
            matrices[m.group('name')] = (_matrix_rows(segments), start_line)
        else:
            L().debug('Skipping cell array mpc.%s', m.group('name'))
    return scalars, matrices


# ---- case assembly ----------------------------------------------------------

def _require(matrices, name, min_cols):
    if name not in matrices:
        raise CaseSyntaxError('Missing table mpc.%s' % name)
    rows, _ = matrices[name]
    for row in rows:
        if len(row) < min_cols:
            _, line, col = row[0]
            raise CaseSyntaxError(
                'mpc.%s rows need at least %d columns, found %d' % (name, min_cols, len(row)),
                line, col,
            )
    return [[value for value, _, _ in row] for row in rows], rows


def _bus_id(value, row):
    if value != int(value):
        _, line, col = row[0]
        raise CaseSyntaxError('Bus id must be an integer, found %r' % value, line, col)
    return int(value)


def _linear_cost(row, raw_row):
    model = int(row[0])
    if model != 2:
        raise UnsupportedCaseFeature(
            'Only polynomial (model 2) generator costs are supported; found model %d '
            '(line %d)' % (model, raw_row[0][1])
        )
    ncost = int(row[3])
    coeffs = row[4:4 + ncost]
    if len(coeffs) < ncost:
        raise CaseSyntaxError('gencost row lists fewer than %d coefficients' % ncost, raw_row[0][1], raw_row[0][2])
    if ncost == 0:
        return 0.0
    if ncost == 1:
        # constant cost only
        return 0.0
    # coefficients run from highest order to c0
    nonlinear = coeffs[:-2]
    if any(c != 0 for c in nonlinear):
        raise UnsupportedCaseFeature(
            'Nonlinear generator cost on line %d; only linear costs keep the '
            'reformulation linear' % raw_row[0][1]
        )
    return float(coeffs[-2])


def parse_case(text, name='case'):
    '''Parse MATPOWER-style case text into a :any:`NetworkCase`.

    Raises :any:`CaseSyntaxError` (with line/column), :any:`CaseSemanticError`
    (dangling bus reference, negative reactance, duplicate bus) or
    :any:`UnsupportedCaseFeature`. Any other unexpected failure is also
    reported as a :any:`CaseError`, never as a bare exception.
    '''
    try:
        return _parse_case(text, name)
    except CaseError:
        raise
    except (ValueError, IndexError, TypeError, OverflowError) as e:
        raise CaseError('Could not read case: %s' % e) from e


def _parse_case(text, name):
    scalars, matrices = _tokenize(text)
    base_mva = 100.0
    if 'baseMVA' in scalars:
        value, line = scalars['baseMVA']
        base_mva = _parse_number(value, line, 1)
        if not base_mva > 0:
            raise CaseSemanticError('baseMVA must be positive')

    bus_rows, bus_raw = _require(matrices, 'bus', 3)
    gen_rows, gen_raw = _require(matrices, 'gen', 10)
    branch_rows, branch_raw = _require(matrices, 'branch', 6)
    cost_rows, cost_raw = _require(matrices, 'gencost', 4)

    buses = []
    seen = set()
    reference_bus = None
    for row, raw in zip(bus_rows, bus_raw):
        bus_id = _bus_id(row[0], raw)
        if bus_id in seen:
            raise CaseSemanticError('Duplicate bus id %d' % bus_id, bus=bus_id)
        seen.add(bus_id)
        bus_type = int(row[1])
        if bus_type == REF_BUS_TYPE and reference_bus is None:
            reference_bus = bus_id
        buses.append(Bus(id=bus_id, bus_type=bus_type, load=float(row[2])))
    if not buses:
        raise CaseSemanticError('Case has no buses')
    if reference_bus is None:
        reference_bus = buses[0].id
        L().info('%s: no reference bus declared, using bus %d', name, reference_bus)

    branches = []
    for row, raw in zip(branch_rows, branch_raw):
        f, t = _bus_id(row[0], raw), _bus_id(row[1], raw)
        status = row[10] if len(row) > 10 else 1
        for bus_id in (f, t):
            if bus_id not in seen:
                raise CaseSemanticError(
                    'Branch on line %d references absent bus %d' % (raw[0][1], bus_id), bus=bus_id
                )
        if status <= 0:
            continue
        x = float(row[3])
        if x < 0:
            raise CaseSemanticError(
                'Negative reactance %r on branch %d-%d (line %d)' % (x, f, t, raw[0][1]), bus=f
            )
        rate = float(row[5])
        if rate < 0:
            raise CaseSemanticError('Negative rating on branch %d-%d (line %d)' % (f, t, raw[0][1]), bus=f)
        branches.append(Branch(from_bus=f, to_bus=t, reactance=x, rating=rate if rate > 0 else math.inf))

    if len(cost_rows) < len(gen_rows):
        raise CaseSemanticError(
            'mpc.gencost has %d rows for %d generators' % (len(cost_rows), len(gen_rows))
        )
    generators = []
    for row, raw, cost_row, cost_r in zip(gen_rows, gen_raw, cost_rows, cost_raw):
        bus_id = _bus_id(row[0], raw)
        if bus_id not in seen:
            raise CaseSemanticError(
                'Generator on line %d references absent bus %d' % (raw[0][1], bus_id), bus=bus_id
            )
        if row[7] <= 0:
            continue
        cost = _linear_cost(cost_row, cost_r)
        generators.append(Generator(bus=bus_id, pmin=float(row[9]), pmax=float(row[8]), cost=cost))

    case = NetworkCase(
        base_mva=base_mva,
        buses=buses,
        branches=branches,
        generators=generators,
        reference_bus=reference_bus,
        name=name,
    )
    L().debug('Parsed %s: %d buses, %d branches, %d generators',
              name, case.n_bus, case.n_branch, case.n_gen)
    return case


def _declared_reference(buses):
    for bus in buses:
        if bus.bus_type == REF_BUS_TYPE:
            return bus.id
    return buses[0].id if buses else None


def _fmt(value):
    if isinstance(value, int):
        return str(value)
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def format_case(case):
    '''Serialise ``case`` in the supported MATPOWER subset.

    ``parse_case(format_case(case)) == case`` for every parsed case. Columns
    the model does not use are written as neutral defaults.
    '''
    out = ['function mpc = %s' % re.sub(r'\W', '_', case.name or 'case'), '']
    out.append("mpc.version = '2';")
    out.append('mpc.baseMVA = %s;' % _fmt(case.base_mva))
    out.append('')
    out.append('%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin')
    out.append('mpc.bus = [')
    # keep stored types unless the reference was moved away from the declared one
    override = _declared_reference(case.buses) != case.reference_bus
    for bus in case.buses:
        bus_type = bus.bus_type
        if override and bus.id == case.reference_bus:
            bus_type = REF_BUS_TYPE
        elif override and bus_type == REF_BUS_TYPE:
            bus_type = 2
        out.append('\t%s\t%d\t%s\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;' % (bus.id, bus_type, _fmt(bus.load)))
    out.append('];')
    out.append('')
    out.append('%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin')
    out.append('mpc.gen = [')
    for gen in case.generators:
        out.append('\t%s\t0\t0\t0\t0\t1\t%s\t1\t%s\t%s;' % (
            gen.bus, _fmt(case.base_mva), _fmt(gen.pmax), _fmt(gen.pmin)))
    out.append('];')
    out.append('')
    out.append('%% fbus tbus r x b rateA rateB rateC ratio angle status')
    out.append('mpc.branch = [')
    for br in case.branches:
        rate = _fmt(br.rating) if br.rated else '0'
        out.append('\t%s\t%s\t0\t%s\t0\t%s\t%s\t%s\t0\t0\t1;' % (
            br.from_bus, br.to_bus, _fmt(br.reactance), rate, rate, rate))
    out.append('];')
    out.append('')
    out.append('%% model startup shutdown n c1 c0')
    out.append('mpc.gencost = [')
    for gen in case.generators:
        out.append('\t2\t0\t0\t2\t%s\t0;' % _fmt(gen.cost))
    out.append('];')
    return '\n'.join(out) + '\n'


def load_case(path_or_name):
    '''Load a case from a file path, or one of :any:`BUNDLED_CASES` by name.

    The argument is interpreted as a path if it is a ``PurePath``, contains a
    path separator or ends in ``.m``.
    '''
    if (
        isinstance(path_or_name, PurePath)
        or '/' in path_or_name
        or '\\' in path_or_name
        or path_or_name.endswith('.m')
    ):
        path = Path(path_or_name)
        L().debug('Load case from file %s', path)
        return parse_case(path.read_text(), name=path.stem)
    if path_or_name not in BUNDLED_CASES:
        raise CaseError('Unknown bundled case %r, expected one of %s'
                        % (path_or_name, ', '.join(BUNDLED_CASES)))
    L().debug('Load bundled case %s', path_or_name)
    text = (resources.files('fdi_assess.cases') / (path_or_name + '.m')).read_text()
    return parse_case(text, name=path_or_name)


def network_graph(case):
    '''networkx multigraph of the in-service branches; edge key = line index.'''
    graph = nx.MultiGraph()
    graph.add_nodes_from(bus.id for bus in case.buses)
    for k, br in enumerate(case.branches):
        graph.add_edge(br.from_bus, br.to_bus, key=k)
    return graph


def validate_case(case):
    '''Returns a list of human-readable invariant violations; empty means valid.'''
    problems = []
    index = case.bus_index
    if case.reference_bus not in index:
        problems.append('reference bus %r does not exist' % (case.reference_bus,))
    for k, br in enumerate(case.branches):
        for bus_id in (br.from_bus, br.to_bus):
            if bus_id not in index:
                problems.append('branch %d references absent bus %r' % (k, bus_id))
        if not br.reactance > 0:
            problems.append('branch %d (%s-%s) has non-positive reactance %r'
                            % (k, br.from_bus, br.to_bus, br.reactance))
        if not br.rating > 0:
            problems.append('branch %d (%s-%s) has non-positive rating %r'
                            % (k, br.from_bus, br.to_bus, br.rating))
    for g, gen in enumerate(case.generators):
        if gen.bus not in index:
            problems.append('generator %d references absent bus %r' % (g, gen.bus))
        if gen.pmin > gen.pmax:
            problems.append('generator %d has Pmin %r > Pmax %r' % (g, gen.pmin, gen.pmax))
    if problems:
        # graph checks need consistent references
        return problems
    graph = network_graph(case)
    if case.n_bus and not nx.is_connected(graph):
        islands = sorted(
            (sorted(component) for component in nx.connected_components(graph)),
            key=len,
        )
        problems.append('network is disconnected into %d islands; smallest: %s'
                        % (len(islands), islands[0]))
    capacity = float(case.pmax.sum())
    load = float(case.loads.sum())
    if capacity < load:
        problems.append('total generation capacity %.6g MW is below total load %.6g MW'
                        % (capacity, load))
    if float(case.pmin.sum()) > load:
        problems.append('total minimum generation %.6g MW exceeds total load %.6g MW'
                        % (float(case.pmin.sum()), load))
    return problems


def scale_ratings(case, factor):
    '''Copy of ``case`` with every finite rating multiplied by ``factor``.'''
    if not factor > 0:
        raise ValueError('Rating scale factor must be positive')
    branches = [
        attr.evolve(br, rating=br.rating * factor) if br.rated else br
        for br in case.branches
    ]
    return attr.evolve(case, branches=branches)


def find_radial_generator_lines(case):
    '''Indices of lines that are the only connection of a bus with generation and no load.

    Such a line carries exactly the generation of that bus, and the load
    shift limit forbids any counterfeit injection there, so its cyber flow
    equals its physical flow: it cannot be overloaded by an unobservable
    attack.
    '''
    graph = network_graph(case)
    gen_buses = {gen.bus for gen in case.generators}
    radial = set()
    for bus in case.buses:
        if bus.load != 0 or bus.id not in gen_buses:
            continue
        edges = list(graph.edges(bus.id, keys=True))
        if len(edges) == 1:
            radial.add(edges[0][2])
    return radial
